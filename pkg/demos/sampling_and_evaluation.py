"""
Sampling candidate programs and judging them in the sandbox
===========================================================

A task carries a natural-language description and a handful of assert
statements. The first assert is shown to the model inside the prompt; the
rest stay held out and decide the verdict. This script samples a few
candidates from a scripted backend and walks through every failure kind
the sandbox can hand back.
"""

from ilf.backends import CompletionRequest, MockBackend, ScriptRule
from ilf.prompts import build_generation_prompt
from ilf.sandbox import SandboxConfig, eval_batch, run_suite
from ilf.tasks import Origin, ProgramSample, Task, render_task

# ---------------------------------------------------------------------------
# 1. A task and its rendered prompt
# ---------------------------------------------------------------------------

task = Task(
    id=42,
    description="Write a function double(n) that returns twice its argument.",
    tests=(
        "assert double(1) == 2",
        "assert double(5) == 10",
        "assert double(-3) == -6",
    ),
)

rendered = render_task(task)
print("prompt shown to the model:")
print(build_generation_prompt(rendered))
print("held-out tests:", list(rendered.evaluation_tests))
print()

# ---------------------------------------------------------------------------
# 2. Sampling from a backend
# ---------------------------------------------------------------------------
# A scripted mock stands in for a real completion endpoint here; swap in
# HttpBackend pointed at any compatible API and nothing else changes.

backend = MockBackend(
    rules=[
        ScriptRule(
            contains="double",
            completions=(
                "def double(n):\n    return n * 2",
                "def double(n):\n    return n + n",
                "def double(n):\n    return n ** 2",  # wrong for most inputs
                "def double(n):\n    return n / 0",  # crashes
            ),
        )
    ],
)

request = CompletionRequest(prompt=build_generation_prompt(rendered), num_samples=4, temperature=0.8)
completions = backend.complete(request)

samples = [
    ProgramSample(
        task_id=task.id,
        program_text=text,
        origin=Origin.BASE_MODEL,
        temperature=request.temperature,
        index=i,
    )
    for i, text in enumerate(completions)
]

# ---------------------------------------------------------------------------
# 3. Evaluating the batch
# ---------------------------------------------------------------------------
# Each candidate runs in its own throwaway process with resource limits; a
# hostile program can fail its evaluation but cannot break the harness.

config = SandboxConfig(wall_clock_timeout=5.0)
outcomes = eval_batch(samples, {task.id: rendered}, config, parallelism=4)

for sample, outcome in zip(samples, outcomes):
    kind = outcome.failure_kind.value if outcome.failure_kind else "-"
    print(f"candidate {sample.index}: passed={outcome.passed} failure_kind={kind}")
    for result in outcome.per_test:
        mark = "ok" if result.passed else "FAIL"
        print(f"    test {result.test_index}: {mark} {result.message}")
print()

# ---------------------------------------------------------------------------
# 4. The full bestiary of verdicts
# ---------------------------------------------------------------------------

hostile = {
    "wrong answer": "def double(n):\n    return n",
    "raises": "def double(n):\n    raise ValueError('nope')",
    "hangs": "def double(n):\n    while True:\n        pass",
    "floods stdout": "def double(n):\n    while True:\n        print('x' * 8192)",
}

for label, program in hostile.items():
    outcome = run_suite(program, rendered, config)
    print(f"{label:>14}: failure_kind={outcome.failure_kind.value} "
          f"duration={outcome.duration:.2f}s")
