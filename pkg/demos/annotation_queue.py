"""
Collecting human feedback through the annotation queue
======================================================

When every sample for a task fails, the task goes to a human: they read a
failing program, write feedback describing the bug, and submit a repaired
version. The queue enforces the workflow (claim, submit, verify) and the
acceptance filter guards against refinements that ignore the original
program or fail the tests.
"""

from ilf.annotation import AnnotationQueue, levenshtein
from ilf.sandbox import SandboxConfig, run_suite
from ilf.tasks import Origin, ProgramSample, Task, render_task

# ---------------------------------------------------------------------------
# 1. A failing sample enters the queue
# ---------------------------------------------------------------------------

task = Task(
    id=311,
    description="Write a function tail(xs) that returns the last element of xs.",
    tests=(
        "assert tail([1, 2, 3]) == 3",
        "assert tail(['a']) == 'a'",
        "assert tail([5, 4]) == 4",
    ),
)
rendered = render_task(task)
config = SandboxConfig(wall_clock_timeout=5.0)

broken = ProgramSample(
    task_id=task.id,
    program_text="def tail(xs):\n    return xs[0]",
    origin=Origin.BASE_MODEL,
    temperature=0.8,
    index=0,
).with_eval(run_suite("def tail(xs):\n    return xs[0]", rendered, config))

print("sample passed:", broken.eval.passed)

# The queue re-runs candidate refinements through the same sandbox.
queue = AnnotationQueue(evaluate=lambda text, task_id: run_suite(text, rendered, config))
queue.add_item(task.id, (broken,))

# ---------------------------------------------------------------------------
# 2. An annotator claims the item and submits feedback plus a fix
# ---------------------------------------------------------------------------

# next_item hands out and claims the lowest open task; claim(annotator,
# task_id) targets a specific one instead.
item = queue.next_item("sam")
print("claimed task:", item.task_id)

receipt = queue.submit(
    annotator_id="sam",
    task_id=task.id,
    feedback_text="The function returns the first element; index with -1 instead.",
    refinement_text="def tail(xs):\n    return xs[-1]",
)
print("after submit:", receipt.status.value, "accepted:", receipt.accepted)

# Submissions park until a reviewer confirms the feedback actually
# describes the bug; only then does the acceptance verdict land.
verdict = queue.review_verify(task_id=task.id, verified=True)
print("after review: accepted:", verdict.accepted)
print()

# ---------------------------------------------------------------------------
# 3. What the filter rejects
# ---------------------------------------------------------------------------
# A refinement that rewrites the program wholesale is suspect even when it
# passes: the feedback probably played no part in it. The filter bounds the
# edit distance at half the longer program's length.

rewrite = "import collections\n\ndef tail(xs):\n    dq = collections.deque(xs, maxlen=1)\n    return dq.pop()"
distance = levenshtein(rewrite, broken.program_text)
bound = 0.5 * max(len(rewrite), len(broken.program_text))
print(f"wholesale rewrite: distance {distance} vs bound {bound:.1f} -> rejected")

# ---------------------------------------------------------------------------
# 4. Exporting accepted annotations
# ---------------------------------------------------------------------------
# The export format is what the refinement stage consumes; each record
# pairs the failing program with verified feedback and the human fix.

for record in queue.export_accepted():
    print("exported task", record["task_id"],
          "| feedback:", record["feedback_text"][:50],
          "| edit distance:", record["edit_distance"])
