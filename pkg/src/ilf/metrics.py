"""Evaluation metrics: pass@k, aggregate reports, perplexity, feedback stats.

pass@k uses the unbiased estimator 1 - C(n-c, k)/C(n, k) in product form, so
it stays exact and overflow-free for large n. Aggregation averages per-task
estimates uniformly and tracks the fraction of tasks with at least one
correct sample.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .annotation import FeedbackAnnotation
from .backends import ScoringBackend, ScoringRequest
from .errors import IlfError

__all__ = [
    "MetricsError",
    "TaskTally",
    "PassReport",
    "FeedbackStats",
    "pass_at_k",
    "aggregate",
    "perplexity",
    "feedback_stats",
    "pass_rate_by_bug_count",
    "histogram_records",
    "format_pass_table",
]


class MetricsError(IlfError):
    pass


@dataclass(frozen=True)
class TaskTally:
    """Sample counts for one task: n evaluated, c of them passing."""

    task_id: int
    n: int
    c: int

    def __post_init__(self):
        if self.n < 1:
            raise MetricsError("n must be >= 1")
        if not 0 <= self.c <= self.n:
            raise MetricsError("c must satisfy 0 <= c <= n")

    @property
    def pass_rate(self) -> float:
        return self.c / self.n

    def to_record(self) -> dict[str, Any]:
        return {"task_id": self.task_id, "n": self.n, "c": self.c}

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> "TaskTally":
        return cls(record["task_id"], record["n"], record["c"])


@dataclass(frozen=True)
class PassReport:
    per_k: dict[int, float]
    one_plus_correct: float
    task_count: int

    def __post_init__(self):
        values = list(self.per_k.values()) + [self.one_plus_correct]
        if any(not 0.0 <= v <= 1.0 for v in values):
            raise MetricsError("report values must lie in [0, 1]")

    def to_record(self) -> dict[str, Any]:
        return {
            "per_k": {str(k): self.per_k[k] for k in sorted(self.per_k)},
            "one_plus_correct": self.one_plus_correct,
            "task_count": self.task_count,
        }

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> "PassReport":
        return cls(
            per_k={int(k): v for k, v in record["per_k"].items()},
            one_plus_correct=record["one_plus_correct"],
            task_count=record["task_count"],
        )


@dataclass(frozen=True)
class FeedbackStats:
    """Multi-label category fractions may sum past 1; that is expected."""

    category_fractions: dict[str, float]
    avg_bugs_addressed: float
    avg_words: float
    std_words: float

    def to_record(self) -> dict[str, Any]:
        return {
            "category_fractions": {k: self.category_fractions[k] for k in sorted(self.category_fractions)},
            "avg_bugs_addressed": self.avg_bugs_addressed,
            "avg_words": self.avg_words,
            "std_words": self.std_words,
        }


def pass_at_k(n: int, c: int, k: int) -> float:
    """Probability that at least one of k draws (without replacement) from
    n samples lands on one of the c correct ones."""
    if n < 1 or k < 1 or c < 0:
        raise MetricsError(f"invalid pass@k inputs: n={n}, c={c}, k={k}")
    if k > n:
        raise MetricsError(f"k={k} exceeds n={n}")
    if c > n:
        raise MetricsError(f"c={c} exceeds n={n}")
    if n - c < k:
        return 1.0
    return float(1.0 - np.prod(1.0 - k / np.arange(n - c + 1, n + 1, dtype=np.float64)))


def aggregate(tallies: Sequence[TaskTally], ks: Sequence[int]) -> PassReport:
    """Unweighted mean of per-task pass@k over the supplied task set."""
    if not tallies:
        raise MetricsError("cannot aggregate an empty tally list")
    if not ks:
        raise MetricsError("need at least one k")
    k_max = max(ks)
    for tally in tallies:
        if tally.n < k_max:
            raise MetricsError(f"task {tally.task_id} has n={tally.n} < max k={k_max}")
    per_k = {int(k): float(np.mean([pass_at_k(t.n, t.c, k) for t in tallies])) for k in ks}
    one_plus = sum(1 for t in tallies if t.c >= 1) / len(tallies)
    return PassReport(per_k=per_k, one_plus_correct=one_plus, task_count=len(tallies))


def perplexity(backend: ScoringBackend, text: str) -> float:
    """exp of the mean negative token log-probability under the backend."""
    if not text:
        raise MetricsError("cannot score empty text")
    response = backend.score(ScoringRequest(text=text))
    return float(np.exp(-response.total_logprob / response.token_count))


def feedback_stats(annotations: Sequence[FeedbackAnnotation]) -> FeedbackStats:
    """Table-style summary of a feedback set.

    Word counts split on whitespace; the spread is the population standard
    deviation. Category fractions count each tag once per annotation, and
    the bug average skips annotations that never recorded a count.
    """
    if not annotations:
        raise MetricsError("cannot summarize an empty annotation list")
    word_counts = np.array([len(a.feedback_text.split()) for a in annotations], dtype=np.float64)
    fractions: dict[str, float] = {}
    for annotation in annotations:
        for tag in set(annotation.bug_tags or ()):
            fractions[tag] = fractions.get(tag, 0.0) + 1.0
    for tag in fractions:
        fractions[tag] /= len(annotations)
    bug_counts = [a.bugs_addressed for a in annotations if a.bugs_addressed is not None]
    avg_bugs = float(np.mean(bug_counts)) if bug_counts else 0.0
    return FeedbackStats(
        category_fractions=fractions,
        avg_bugs_addressed=avg_bugs,
        avg_words=float(word_counts.mean()),
        std_words=float(word_counts.std()),
    )


def pass_rate_by_bug_count(linked: Sequence[tuple[FeedbackAnnotation, TaskTally]]) -> dict[int, float]:
    """Mean refinement pass rate grouped by the feedback's bug count.

    Annotations without a recorded bug count contribute to no group; empty
    groups are simply absent from the result.
    """
    groups: dict[int, list[float]] = {}
    for annotation, tally in linked:
        if annotation.bugs_addressed is None:
            continue
        groups.setdefault(annotation.bugs_addressed, []).append(tally.pass_rate)
    return {bugs: float(np.mean(rates)) for bugs, rates in sorted(groups.items())}


def histogram_records(values: Iterable[float], bin_count: int = 20) -> list[dict[str, float]]:
    """(bin, count) records for an external plotter."""
    data = np.asarray(list(values), dtype=np.float64)
    if data.size == 0:
        raise MetricsError("cannot histogram an empty value list")
    if bin_count < 1:
        raise MetricsError("bin_count must be >= 1")
    counts, edges = np.histogram(data, bins=bin_count)
    return [
        {"bin_left": float(edges[i]), "bin_right": float(edges[i + 1]), "count": int(counts[i])}
        for i in range(len(counts))
    ]


def format_pass_table(rows: Mapping[str, PassReport]) -> str:
    """Aligned plain-text table, one row per labeled report."""
    if not rows:
        raise MetricsError("no reports to format")
    ks = sorted({k for report in rows.values() for k in report.per_k})
    headers = ["model", *[f"pass@{k}" for k in ks], "1+ correct", "tasks"]
    body = []
    for label, report in rows.items():
        cells = [label]
        cells += [f"{report.per_k[k]*100:.1f}%" if k in report.per_k else "-" for k in ks]
        cells += [f"{report.one_plus_correct*100:.1f}%", str(report.task_count)]
        body.append(cells)
    widths = [max(len(row[i]) for row in [headers, *body]) for i in range(len(headers))]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * widths[i] for i in range(len(headers))),
    ]
    lines += ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)) for row in body]
    return "\n".join(lines) + "\n"
