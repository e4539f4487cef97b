"""
Estimating pass@k and summarizing evaluation runs
=================================================

pass@k asks: if we sample n candidates per task and show someone the best
k of them, how often does at least one work? Computing it naively from k
samples wastes the other n-k, so the estimator reuses all n draws per task
and stays unbiased.
"""

import itertools

from ilf.metrics import TaskTally, aggregate, format_pass_table, pass_at_k

# ---------------------------------------------------------------------------
# 1. The estimator agrees with brute force
# ---------------------------------------------------------------------------
# With n=10 samples of which c=3 passed, enumerate every k-subset and count
# how many contain a passing sample. The closed form gives the same number
# without the factorial blowup.

n, c, k = 10, 3, 5
subsets = list(itertools.combinations(range(n), k))
hits = sum(1 for s in subsets if any(i < c for i in s))
print(f"enumeration: {hits}/{len(subsets)} subsets hit = {hits / len(subsets):.6f}")
print(f"estimator:   pass_at_k({n}, {c}, {k}) = {pass_at_k(n, c, k):.6f}")
print()

# ---------------------------------------------------------------------------
# 2. Aggregating a whole run
# ---------------------------------------------------------------------------
# One tally per task: n candidates sampled, c passed. The aggregate averages
# pass@k across tasks and also reports the fraction of tasks with at least
# one passing sample, which is what decides whether a task still needs
# feedback.

tallies = [
    TaskTally(task_id=1, n=30, c=0),
    TaskTally(task_id=2, n=30, c=1),
    TaskTally(task_id=3, n=30, c=4),
    TaskTally(task_id=4, n=30, c=11),
    TaskTally(task_id=5, n=30, c=30),
]

report = aggregate(tallies, ks=(1, 5, 10))
print(f"tasks: {report.task_count}")
print(f"fraction with >= 1 passing sample: {report.one_plus_correct:.3f}")
for kk, rate in sorted(report.per_k.items()):
    print(f"pass@{kk}: {rate:.3f}")
print()

# ---------------------------------------------------------------------------
# 3. Comparing models side by side
# ---------------------------------------------------------------------------

baseline = aggregate([TaskTally(t.task_id, t.n, max(0, t.c - 2)) for t in tallies], ks=(1, 5, 10))
print(format_pass_table({"baseline": baseline, "finetuned": report}))

# ---------------------------------------------------------------------------
# 4. Edge cases worth knowing
# ---------------------------------------------------------------------------
# Once fewer than k samples failed, some k-subset must contain a passing
# one, so the estimate saturates at exactly 1.0 with no rounding error.

print("c=0 gives", pass_at_k(30, 0, 10))
print("n-c < k gives", pass_at_k(30, 25, 10))
