"""
Building refinement prompts and parsing completions
===================================================

A refinement prompt lays out four sections behind fixed markers: the task,
the old code, the feedback, and an empty new-code section the model must
fill in. The same markers double as stop sequences and as the grammar for
parsing prompts back into parts.
"""

from ilf.prompts import (
    Exemplar,
    RefinePromptTemplate,
    build_feedback_elicitation_prompt,
    build_refine_prompt,
    extract_completion_code,
    parse_refine_prompt,
)
from ilf.tasks import Task, render_task

# ---------------------------------------------------------------------------
# 1. Zero-shot refinement prompt
# ---------------------------------------------------------------------------

task = Task(
    id=7,
    description="Write a function last_digit(n) that returns the final digit of n.",
    tests=("assert last_digit(123) == 3", "assert last_digit(7) == 7"),
)
rendered = render_task(task)

template = RefinePromptTemplate()
prompt = build_refine_prompt(
    template,
    rendered,
    program="def last_digit(n):\n    return n % 100",
    feedback="Modulo 100 keeps two digits; use modulo 10.",
)
print(prompt)
print("stop sequences:", template.stop_sequences())
print()

# ---------------------------------------------------------------------------
# 2. Few-shot prompting with exemplars
# ---------------------------------------------------------------------------
# Exemplars are complete worked examples that precede the query. The query
# itself always ends right after the new-code marker, where generation
# starts.

shot = Exemplar(
    task_text="Write a function inc(n) that adds one.\nassert inc(1) == 2",
    old_code="def inc(n):\n    return n - 1",
    feedback="It subtracts; flip the sign.",
    new_code="def inc(n):\n    return n + 1",
)
few_shot_template = RefinePromptTemplate(exemplars=(shot,))

one_shot = build_refine_prompt(
    few_shot_template,
    rendered,
    program="def last_digit(n):\n    return n % 100",
    feedback="Modulo 100 keeps two digits; use modulo 10.",
    shots=1,
)
print("one-shot prompt is", len(one_shot) - len(prompt), "characters longer")

# ---------------------------------------------------------------------------
# 3. Extracting code from a raw completion
# ---------------------------------------------------------------------------
# Models keep talking after the answer; everything from the first marker or
# stop sequence onward is cut.

raw = "def last_digit(n):\n    return n % 10\n\n### Task\nWrite another..."
code = extract_completion_code(raw, template)
print("extracted:", repr(code))
print()

# ---------------------------------------------------------------------------
# 4. Eliciting feedback instead of code
# ---------------------------------------------------------------------------
# The same template also asks a model to critique a program: the prompt
# stops after the feedback marker, so the completion is the feedback.

elicitation = build_feedback_elicitation_prompt(
    template,
    rendered,
    program="def last_digit(n):\n    return n % 100",
)
print("elicitation prompt ends with:", repr(elicitation[-30:]))
print()

# ---------------------------------------------------------------------------
# 5. Prompts parse back into their sections
# ---------------------------------------------------------------------------
# Useful for audits: the exact strings that went into any logged prompt can
# be recovered mechanically.

parsed = parse_refine_prompt(few_shot_template, one_shot)
print("parsed", len(parsed), "instances (exemplar + query)")
query = parsed[-1]
print("query feedback:", query["feedback"])
print("query new_code:", query["new_code"], "(completion point)")
