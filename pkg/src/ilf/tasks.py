"""Programming-task corpus: MBPP-format ingestion, prompt rendering, splits.

A task couples a natural-language description with an ordered suite of unit
tests. Rendering embeds the first test into the prompt (it disambiguates the
expected function signature) and holds the remaining tests out for
evaluation. Tasks with a single test fall back to the full suite at
evaluation time so that the verdict is never vacuous.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import IO, Any, Iterable, Mapping

import json

from .errors import IlfError
from .records import read_json, write_json

__all__ = [
    "Task",
    "RenderedTask",
    "SplitAssignment",
    "SplitConfig",
    "ProgramSample",
    "Origin",
    "DatasetError",
    "SplitError",
    "load_dataset",
    "save_dataset",
    "task_to_record",
    "task_from_record",
    "render_task",
    "extract_embedded_test",
    "assign_splits",
    "load_splits",
    "save_splits",
]


class DatasetError(IlfError):
    """Malformed or inconsistent task records."""


class SplitError(IlfError):
    """Invalid split configuration or missing correctness flags."""


@dataclass(frozen=True)
class Task:
    """One programming problem with its ordered unit-test suite."""

    id: int
    description: str
    tests: tuple[str, ...]
    gold_program: str | None = None
    setup_code: str | None = None

    def __post_init__(self):
        if not isinstance(self.id, int) or isinstance(self.id, bool) or self.id <= 0:
            raise DatasetError(f"task id must be a positive integer, got {self.id!r}")
        if not self.description.strip():
            raise DatasetError(f"task {self.id}: empty description")
        if not self.tests:
            raise DatasetError(f"task {self.id}: empty test list")
        if any(not t.strip() for t in self.tests):
            raise DatasetError(f"task {self.id}: blank test statement")


@dataclass(frozen=True)
class RenderedTask:
    """A task prepared for generation and evaluation.

    ``prompt_text`` contains the description followed by the first test
    verbatim; ``heldout_tests`` are the remaining tests. When a task has a
    single test, ``heldout_tests`` is empty and ``evaluation_tests`` falls
    back to the full suite.
    """

    task_id: int
    description: str
    prompt_text: str
    embedded_test: str
    heldout_tests: tuple[str, ...]
    all_tests: tuple[str, ...]
    setup_code: str | None = None

    @property
    def evaluation_tests(self) -> tuple[str, ...]:
        return self.heldout_tests if self.heldout_tests else self.all_tests


def render_task(task: Task) -> RenderedTask:
    """Build the generation prompt and the held-out suite for a task."""
    embedded = task.tests[0]
    prompt = task.description.rstrip("\n") + "\n" + embedded + "\n"
    return RenderedTask(
        task_id=task.id,
        description=task.description,
        prompt_text=prompt,
        embedded_test=embedded,
        heldout_tests=tuple(task.tests[1:]),
        all_tests=tuple(task.tests),
        setup_code=task.setup_code,
    )


def extract_embedded_test(prompt_text: str) -> str:
    """Recover the prompt-embedded test from a rendered prompt.

    The embedded test is the final non-empty line of the prompt. MBPP test
    statements are single-line asserts; multi-line tests are not supported
    here.
    """
    for line in reversed(prompt_text.splitlines()):
        if line.strip():
            return line
    raise DatasetError("prompt contains no test line")


class Origin(str, enum.Enum):
    """Where a candidate program came from."""

    BASE_MODEL = "base_model"
    REFINER = "refiner"
    HUMAN = "human"
    EXTERNAL_MODEL = "external_model"


@dataclass(frozen=True)
class ProgramSample:
    """A candidate program with sampling provenance and (optionally) its
    evaluation outcome. ``eval`` is attached after the fact with
    :func:`dataclasses.replace`; instances are otherwise immutable."""

    task_id: int
    program_text: str
    origin: Origin
    temperature: float
    index: int
    eval: Any | None = None  # sandbox.EvalOutcome once evaluated

    def __post_init__(self):
        if not self.program_text:
            raise DatasetError(f"task {self.task_id}: empty program text")

    def with_eval(self, outcome) -> "ProgramSample":
        return replace(self, eval=outcome)

    def to_record(self) -> dict[str, Any]:
        record = {
            "task_id": self.task_id,
            "program_text": self.program_text,
            "origin": self.origin.value,
            "temperature": self.temperature,
            "index": self.index,
        }
        if self.eval is not None:
            record["eval"] = self.eval.to_record()
        return record

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> "ProgramSample":
        from .sandbox import EvalOutcome

        outcome = record.get("eval")
        return cls(
            task_id=record["task_id"],
            program_text=record["program_text"],
            origin=Origin(record["origin"]),
            temperature=record["temperature"],
            index=record["index"],
            eval=EvalOutcome.from_record(outcome) if outcome is not None else None,
        )


# ---------------------------------------------------------------------------
# Dataset ingestion (MBPP record format)
# ---------------------------------------------------------------------------

def task_from_record(record: Mapping[str, Any]) -> Task:
    """Map an MBPP-style record onto a Task.

    Field names mirror the public benchmark: ``task_id``, ``text``, ``code``,
    ``test_list``, ``test_setup_code``. Unknown fields are ignored.
    """
    try:
        task_id = record["task_id"]
        text = record["text"]
        test_list = record["test_list"]
    except KeyError as exc:
        raise DatasetError(f"missing field {exc.args[0]!r}") from exc
    if not isinstance(test_list, (list, tuple)):
        raise DatasetError(f"task {task_id!r}: test_list must be a list")
    gold = record.get("code") or None
    setup = record.get("test_setup_code") or None
    return Task(
        id=task_id,
        description=text,
        tests=tuple(test_list),
        gold_program=gold,
        setup_code=setup,
    )


def task_to_record(task: Task) -> dict[str, Any]:
    record: dict[str, Any] = {
        "task_id": task.id,
        "text": task.description,
        "test_list": list(task.tests),
    }
    if task.gold_program is not None:
        record["code"] = task.gold_program
    if task.setup_code is not None:
        record["test_setup_code"] = task.setup_code
    return record


def load_dataset(source: str | Path | IO[str] | Iterable[str]) -> list[Task]:
    """Read tasks from a line-delimited record file (one JSON object per line).

    Records are returned in file order. A malformed record raises
    DatasetError naming the offending line; duplicate IDs are rejected.
    """
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            return load_dataset(fh)

    tasks: list[Task] = []
    seen: set[int] = set()
    for lineno, line in enumerate(source, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
        if not isinstance(record, dict):
            raise DatasetError(f"line {lineno}: record must be a JSON object")
        try:
            task = task_from_record(record)
        except DatasetError as exc:
            raise DatasetError(f"line {lineno}: {exc}") from exc
        if task.id in seen:
            raise DatasetError(f"line {lineno}: duplicate task id {task.id}")
        seen.add(task.id)
        tasks.append(task)
    return tasks


def save_dataset(tasks: Iterable[Task], path: str | Path) -> None:
    from .records import write_jsonl

    write_jsonl(path, (task_to_record(t) for t in tasks))


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------

def _in_range(task_id: int, bounds: tuple[int, int]) -> bool:
    return bounds[0] <= task_id <= bounds[1]


@dataclass(frozen=True)
class SplitConfig:
    """Inclusive ID ranges for the four dataset regions.

    Defaults follow the MBPP re-split: the refiner-training region, the
    final-training region, the evaluation region, and a dropped prompt
    region.
    """

    refine_range: tuple[int, int] = (111, 310)
    train_range: tuple[int, int] = (311, 974)
    test_range: tuple[int, int] = (11, 110)
    drop_range: tuple[int, int] = (1, 10)

    def __post_init__(self):
        ranges = [self.refine_range, self.train_range, self.test_range, self.drop_range]
        for lo, hi in ranges:
            if lo > hi:
                raise SplitError(f"invalid range ({lo}, {hi})")
        for i, a in enumerate(ranges):
            for b in ranges[i + 1:]:
                if a[0] <= b[1] and b[0] <= a[1]:
                    raise SplitError(f"overlapping split ranges {a} and {b}")

    def to_record(self) -> dict[str, Any]:
        return {
            "refine_range": list(self.refine_range),
            "train_range": list(self.train_range),
            "test_range": list(self.test_range),
            "drop_range": list(self.drop_range),
        }

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> "SplitConfig":
        kwargs = {}
        for key in ("refine_range", "train_range", "test_range", "drop_range"):
            if key in record:
                kwargs[key] = tuple(record[key])
        return cls(**kwargs)


@dataclass(frozen=True)
class SplitAssignment:
    """Task IDs assigned to the refiner-training / final-training /
    evaluation splits. The three sets are pairwise disjoint."""

    refine_ids: frozenset[int]
    train_ids: frozenset[int]
    test_ids: frozenset[int]

    def __post_init__(self):
        if (self.refine_ids & self.train_ids
                or self.refine_ids & self.test_ids
                or self.train_ids & self.test_ids):
            raise SplitError("split sets must be pairwise disjoint")

    def to_record(self) -> dict[str, Any]:
        return {
            "refine_ids": sorted(self.refine_ids),
            "train_ids": sorted(self.train_ids),
            "test_ids": sorted(self.test_ids),
        }

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> "SplitAssignment":
        return cls(
            refine_ids=frozenset(record["refine_ids"]),
            train_ids=frozenset(record["train_ids"]),
            test_ids=frozenset(record["test_ids"]),
        )


def assign_splits(
    tasks: Iterable[Task],
    zero_correct: Mapping[int, bool],
    config: SplitConfig = SplitConfig(),
) -> SplitAssignment:
    """Assign tasks to splits given per-task zero-correct flags.

    The refine and train regions admit only tasks for which the base model
    produced no correct sample (flag true); the test region admits every
    task regardless of flag; the drop region is discarded. A task in the
    refine or train region without a flag is an error.
    """
    refine: set[int] = set()
    train: set[int] = set()
    test: set[int] = set()
    for task in tasks:
        tid = task.id
        if _in_range(tid, config.drop_range):
            continue
        if _in_range(tid, config.test_range):
            test.add(tid)
        elif _in_range(tid, config.refine_range) or _in_range(tid, config.train_range):
            if tid not in zero_correct:
                raise SplitError(f"task {tid}: missing zero-correct flag")
            if zero_correct[tid]:
                (refine if _in_range(tid, config.refine_range) else train).add(tid)
        # IDs outside every configured range are dropped.
    return SplitAssignment(
        refine_ids=frozenset(refine),
        train_ids=frozenset(train),
        test_ids=frozenset(test),
    )


def save_splits(splits: SplitAssignment, path: str | Path) -> None:
    write_json(path, splits.to_record())


def load_splits(path: str | Path) -> SplitAssignment:
    return SplitAssignment.from_record(read_json(path))
