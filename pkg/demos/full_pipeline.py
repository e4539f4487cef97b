"""
The whole loop: sample, annotate, refine, fine-tune, evaluate
=============================================================

Training on language feedback needs five ingredients per task: failing
samples from the base model, feedback describing the bug, refinements that
act on the feedback, a filter keeping only refinements that truly pass,
and a fine-tune dataset assembled from the survivors. This script runs the
complete loop on a scripted corpus small enough to watch every artifact,
then re-runs the two experiments that justify the design: shuffling
feedback away from its task, and growing the feedback budget.

Everything here is seeded, so re-running the script reproduces the same
artifacts byte for byte.
"""

import tempfile
from pathlib import Path

from ilf.backends import BackendRegistry, MockBackend, MockTrainer, ScriptRule
from ilf.pipeline import (
    PipelineRun,
    RunConfig,
    Seeds,
    audit_lineage,
    run_feedback_ablation,
    run_scaling_experiment,
)
from ilf.sandbox import SandboxConfig
from ilf.tasks import Task

# ---------------------------------------------------------------------------
# 1. A corpus and scripted stand-ins for the models
# ---------------------------------------------------------------------------
# Task ids place each task in a split: 11 is a test task, 111 a feedback
# demonstration task, 311-313 are training tasks. Every scripted backend
# keys off the function name that appears in its prompt. The base model
# plants a sign bug; the refiner repairs a program only when the prompt
# contains feedback naming that exact bug, which is what makes feedback
# quality measurable later.


def make_task(tid):
    return Task(
        id=tid,
        description=f"Write a function solve{tid}(n) that returns n plus {tid}.",
        tests=(f"assert solve{tid}(0) == {tid}", f"assert solve{tid}(5) == {5 + tid}"),
        gold_program=f"def solve{tid}(n):\n    return n + {tid}",
    )


def buggy(tid):
    return f"def solve{tid}(n):\n    return n - {tid}"


def feedback(tid):
    return f"Replace the minus with a plus in solve{tid}."


TASK_IDS = (111, 11, 311, 312, 313)
corpus = [make_task(tid) for tid in TASK_IDS]

registry = BackendRegistry()
registry.register(
    "generator",
    MockBackend(rules=[ScriptRule(contains=f"solve{t}(", completions=(buggy(t),)) for t in TASK_IDS]),
)
registry.register(
    "refiner",
    MockBackend(
        rules=[ScriptRule(contains=feedback(t), completions=(make_task(t).gold_program,)) for t in TASK_IDS],
        default_completions=("def unrelated(n):\n    return None",),
    ),
)
registry.register(
    "feedback",
    MockBackend(rules=[ScriptRule(contains=f"solve{t}(", completions=(feedback(t),)) for t in TASK_IDS]),
)
# Bigger fine-tune datasets unlock strictly better tuned models.
registry.register("trainer", MockTrainer(graded_results=[(0, "tuned-weak"), (3, "tuned-strong")]))
registry.register(
    "tuned-weak",
    MockBackend(default_completions=("def unrelated(n):\n    return None",)),
)
registry.register(
    "tuned-strong",
    MockBackend(rules=[ScriptRule(contains="solve11(", completions=(make_task(11).gold_program,))]),
)

# ---------------------------------------------------------------------------
# 2. Running the six stages
# ---------------------------------------------------------------------------

config = RunConfig(
    samples_per_task=4,
    temperature=0.8,
    ks=(1, 2),
    seeds=Seeds(sampling=1, selection=2, shuffle=3),
    eval_parallelism=4,
    sandbox=SandboxConfig(wall_clock_timeout=10.0, memory_limit_bytes=None),
)

run_dir = Path(tempfile.mkdtemp()) / "run"
run = PipelineRun.create(run_dir, config, registry, corpus)

print("sample:  ", run.stage_sample())
print("feedback:", run.stage_collect_feedback())
print("refine:  ", run.stage_refine())
print("assemble:", run.assemble_final_dataset())
job = run.stage_finetune()
print("finetune:", job.status.value, "->", job.resulting_backend_ref)
report = run.stage_evaluate()
print("evaluate: baseline pass@1", report["baseline"]["per_k"]["1"],
      "| finetuned pass@1", report["finetuned"]["per_k"]["1"])
print()
print(run.report_text())

# ---------------------------------------------------------------------------
# 3. Auditing provenance
# ---------------------------------------------------------------------------
# Every fine-tune example must trace back through the event log to a
# failing original and a passing refinement, and must sit in the train
# split. The audit replays the log and reports violations.

audit = audit_lineage(run_dir)
print("lineage:", audit["traced"], "of", audit["examples"], "examples traced,",
      len(audit["violations"]), "violations")
print()

# ---------------------------------------------------------------------------
# 4. Does feedback matter? Shuffle it away from its task
# ---------------------------------------------------------------------------
# Reusing the same annotations but deranging which task gets which feedback
# text isolates the information content of the feedback itself.

ablation = run_feedback_ablation(run)
print("refinement pass@1, matched feedback: ", ablation["matched"]["per_k"]["1"])
print("refinement pass@1, shuffled feedback:", ablation["shuffled"]["per_k"]["1"])
print()

# ---------------------------------------------------------------------------
# 5. Does more feedback help? Grow the budget
# ---------------------------------------------------------------------------
# Each budget k annotates a seeded random subset of k eligible tasks, runs
# the rest of the loop, and evaluates the resulting model on the test
# split. All budgets reuse the same base samples.

reports = run_scaling_experiment(run, [1, 3])
for k in (1, 3):
    print(f"feedback budget {k}: final pass@1 {reports[k].per_k[1]:.2f}")
