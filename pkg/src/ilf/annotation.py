"""Feedback annotations, the acceptance filter, and the annotation queue.

An annotation attaches natural-language feedback to one failing program.
A refinement submission pairs an annotation with a rewritten program; it is
accepted only when the refinement passes the task's tests, the feedback has
been manually verified, and the edit distance stays under half the longer
program's length. The queue serializes the claim/submit/review workflow for
concurrent annotators.
"""

from __future__ import annotations

import enum
import random
import threading
import time
from dataclasses import dataclass, replace
from typing import Any, Callable, Mapping, Sequence

from .errors import IlfError, ValidationError
from .sandbox import EvalOutcome
from .tasks import ProgramSample

__all__ = [
    "Author",
    "FeedbackAnnotation",
    "RefinementSubmission",
    "AcceptanceResult",
    "RejectReason",
    "ItemStatus",
    "QueueItem",
    "SubmissionReceipt",
    "AnnotationQueue",
    "AnnotationError",
    "ValidationError",
    "StateError",
    "ConflictError",
    "levenshtein",
    "accept_annotation",
    "shuffle_feedback",
    "annotation_to_export_record",
    "annotation_from_export_record",
]

# Seed labels for bug tagging; open-ended, datasets may add their own.
BUG_CATEGORIES = (
    "logic",
    "algorithm",
    "off-by-one",
    "formatting",
    "types",
    "missing-case",
    "extra-case",
    "variable-misuse",
    "syntax",
    "io",
    "performance",
)


class AnnotationError(IlfError):
    pass


class StateError(AnnotationError):
    pass


class ConflictError(AnnotationError):
    pass


class Author(str, enum.Enum):
    HUMAN = "human"
    MODEL = "model"


def levenshtein(a: str, b: str) -> int:
    """Unit-cost character edit distance, two-row dynamic programming."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ch_a in enumerate(a, start=1):
        current = [i]
        for j, ch_b in enumerate(b, start=1):
            cost = 0 if ch_a == ch_b else 1
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost))
        previous = current
    return previous[-1]


@dataclass(frozen=True)
class FeedbackAnnotation:
    """Natural-language feedback attached to one failing program."""

    task_id: int
    target_program: ProgramSample
    feedback_text: str
    author: Author
    bug_tags: tuple[str, ...] | None = None
    bugs_addressed: int | None = None
    verified_correct: bool = False

    def __post_init__(self):
        if not self.feedback_text.strip():
            raise ValidationError("feedback_text must be non-empty")
        if self.target_program.eval is None:
            raise ValidationError("target program must carry an evaluation outcome")
        if self.target_program.eval.passed:
            raise ValidationError("feedback targets incorrect programs only (Eval=0)")
        if self.target_program.task_id != self.task_id:
            raise ValidationError("target program belongs to a different task")
        if self.bugs_addressed is not None and self.bugs_addressed < 0:
            raise ValidationError("bugs_addressed must be >= 0")

    def to_record(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "target_program": self.target_program.to_record(),
            "feedback_text": self.feedback_text,
            "author": self.author.value,
            "bug_tags": list(self.bug_tags) if self.bug_tags is not None else None,
            "bugs_addressed": self.bugs_addressed,
            "verified_correct": self.verified_correct,
        }

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> "FeedbackAnnotation":
        tags = record.get("bug_tags")
        return cls(
            task_id=record["task_id"],
            target_program=ProgramSample.from_record(record["target_program"]),
            feedback_text=record["feedback_text"],
            author=Author(record["author"]),
            bug_tags=tuple(tags) if tags is not None else None,
            bugs_addressed=record.get("bugs_addressed"),
            verified_correct=record.get("verified_correct", False),
        )


@dataclass(frozen=True)
class RefinementSubmission:
    """A rewritten program answering one annotation.

    ``edit_distance`` is pinned to the Levenshtein distance between the
    refinement and the annotated program; construct via :meth:`create` to
    avoid computing it twice.
    """

    annotation_ref: FeedbackAnnotation
    refinement_text: str
    edit_distance: int
    eval: EvalOutcome | None = None

    def __post_init__(self):
        if not self.refinement_text:
            raise ValidationError("refinement_text must be non-empty")
        expected = levenshtein(self.refinement_text, self.annotation_ref.target_program.program_text)
        if self.edit_distance != expected:
            raise ValidationError(f"edit_distance {self.edit_distance} != computed {expected}")

    @classmethod
    def create(
        cls, annotation: FeedbackAnnotation, refinement_text: str, eval: EvalOutcome | None = None
    ) -> "RefinementSubmission":
        distance = levenshtein(refinement_text, annotation.target_program.program_text)
        return cls(annotation_ref=annotation, refinement_text=refinement_text, edit_distance=distance, eval=eval)

    def with_eval(self, outcome: EvalOutcome) -> "RefinementSubmission":
        return replace(self, eval=outcome)


class RejectReason(str, enum.Enum):
    TEST_FAILURE = "test_failure"
    UNVERIFIED = "unverified"
    EDIT_DISTANCE = "edit_distance"


@dataclass(frozen=True)
class AcceptanceResult:
    accepted: bool
    reason: RejectReason | None = None

    def to_record(self) -> dict[str, Any]:
        return {"accepted": self.accepted, "reason": self.reason.value if self.reason else None}


def accept_annotation(annotation: FeedbackAnnotation, submission: RefinementSubmission) -> AcceptanceResult:
    """Apply the three acceptance clauses in order; the first failure wins.

    (i) the refinement passes all tests, (ii) the feedback is manually
    verified, (iii) the edit distance is strictly under half the longer of
    the two program lengths, in characters.
    """
    if submission.eval is None:
        raise StateError("submission has no evaluation outcome")
    if not submission.eval.passed:
        return AcceptanceResult(False, RejectReason.TEST_FAILURE)
    if not annotation.verified_correct:
        return AcceptanceResult(False, RejectReason.UNVERIFIED)
    bound = 0.5 * max(len(submission.refinement_text), len(annotation.target_program.program_text))
    if not submission.edit_distance < bound:
        return AcceptanceResult(False, RejectReason.EDIT_DISTANCE)
    return AcceptanceResult(True)


def shuffle_feedback(annotations: Sequence[FeedbackAnnotation], seed: int) -> list[FeedbackAnnotation]:
    """Reassign feedback across annotations as a seeded derangement.

    Every annotation receives feedback that originated on a different task;
    the multiset of feedback payloads is preserved. Used for the
    unrelated-feedback ablation, so the manual-verification flag is cleared:
    the new pairings were never reviewed.
    """
    n = len(annotations)
    if n < 2:
        raise ValidationError("need at least 2 annotations to shuffle")
    rng = random.Random(seed)
    indices = list(range(n))
    for attempt in range(1000):
        # Sattolo's algorithm: a uniform full cycle, hence no fixed points
        # by position. Retry only guards duplicate task ids in the input.
        for i in range(n - 1, 0, -1):
            j = rng.randrange(i)
            indices[i], indices[j] = indices[j], indices[i]
        if all(annotations[src].task_id != annotations[dst].task_id for dst, src in enumerate(indices)):
            break
    else:
        raise AnnotationError("could not derange feedback by task of origin")
    shuffled = []
    for dst, src in enumerate(indices):
        donor = annotations[src]
        shuffled.append(
            replace(
                annotations[dst],
                feedback_text=donor.feedback_text,
                author=donor.author,
                bug_tags=donor.bug_tags,
                bugs_addressed=donor.bugs_addressed,
                verified_correct=False,
            )
        )
    return shuffled


def annotation_to_export_record(
    annotation: FeedbackAnnotation, submission: RefinementSubmission | None = None
) -> dict[str, Any]:
    """The interchange record consumed by prompting and the pipeline."""
    record = annotation.to_record()
    record["refinement_text"] = submission.refinement_text if submission else None
    record["edit_distance"] = submission.edit_distance if submission else None
    return record


def annotation_from_export_record(record: Mapping[str, Any]) -> tuple[FeedbackAnnotation, str | None]:
    annotation = FeedbackAnnotation.from_record(record)
    return annotation, record.get("refinement_text")


class ItemStatus(str, enum.Enum):
    OPEN = "open"
    CLAIMED = "claimed"
    SUBMITTED = "submitted"
    ACCEPTED = "accepted"
    REJECTED = "rejected"


# Rank order for the forward-only rule; open<->claimed is the one exception.
_STATUS_RANK = {
    ItemStatus.OPEN: 0,
    ItemStatus.CLAIMED: 1,
    ItemStatus.SUBMITTED: 2,
    ItemStatus.ACCEPTED: 3,
    ItemStatus.REJECTED: 3,
}


@dataclass(frozen=True)
class QueueItem:
    task_id: int
    failing_programs: tuple[ProgramSample, ...]
    status: ItemStatus
    claimed_by: str | None = None

    def __post_init__(self):
        if not self.failing_programs:
            raise ValidationError("queue item needs at least one failing program")
        for program in self.failing_programs:
            if program.eval is None or program.eval.passed:
                raise ValidationError("queue items hold only evaluated, failing programs")
            if program.task_id != self.task_id:
                raise ValidationError("failing program belongs to a different task")

    def to_record(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "failing_programs": [p.to_record() for p in self.failing_programs],
            "status": self.status.value,
            "claimed_by": self.claimed_by,
        }


@dataclass(frozen=True)
class SubmissionReceipt:
    task_id: int
    status: ItemStatus
    accepted: bool | None
    reason: RejectReason | None
    edit_distance: int
    eval: EvalOutcome
    annotation_seconds: float

    def to_record(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "status": self.status.value,
            "accepted": self.accepted,
            "reason": self.reason.value if self.reason else None,
            "edit_distance": self.edit_distance,
            "eval": self.eval.to_record(),
            "annotation_seconds": round(self.annotation_seconds, 3),
        }


class _Entry:
    """Mutable queue state for one task; guarded by the queue lock."""

    __slots__ = (
        "item",
        "claimed_at",
        "annotation",
        "submission",
        "receipt",
    )

    def __init__(self, item: QueueItem):
        self.item = item
        self.claimed_at: float | None = None
        self.annotation: FeedbackAnnotation | None = None
        self.submission: RefinementSubmission | None = None
        self.receipt: SubmissionReceipt | None = None


class AnnotationQueue:
    """Single-writer annotation queue; items are keyed by task id.

    ``evaluate`` runs a refinement against its task's test suite and is
    called outside the lock, so slow sandbox runs do not serialize other
    annotators. Status changes obey the forward-only state machine with the
    open<->claimed exception.
    """

    def __init__(self, evaluate: Callable[[str, int], EvalOutcome], clock: Callable[[], float] = time.monotonic):
        self._evaluate = evaluate
        self._clock = clock
        self._lock = threading.Lock()
        self._entries: dict[int, _Entry] = {}

    def add_item(self, task_id: int, failing_programs: Sequence[ProgramSample]) -> QueueItem:
        item = QueueItem(task_id=task_id, failing_programs=tuple(failing_programs), status=ItemStatus.OPEN)
        with self._lock:
            if task_id in self._entries:
                raise ConflictError(f"task {task_id} is already queued")
            self._entries[task_id] = _Entry(item)
        return item

    def list_items(self) -> list[QueueItem]:
        with self._lock:
            return [self._entries[tid].item for tid in sorted(self._entries)]

    def get_item(self, task_id: int) -> QueueItem:
        with self._lock:
            return self._require(task_id).item

    def _require(self, task_id: int) -> _Entry:
        entry = self._entries.get(task_id)
        if entry is None:
            raise StateError(f"no queue item for task {task_id}")
        return entry

    def _transition(self, entry: _Entry, new_status: ItemStatus, claimed_by: str | None) -> None:
        old = entry.item.status
        reopening = old == ItemStatus.CLAIMED and new_status == ItemStatus.OPEN
        if not reopening and _STATUS_RANK[new_status] <= _STATUS_RANK[old]:
            raise StateError(f"cannot move item from {old.value} to {new_status.value}")
        entry.item = replace(entry.item, status=new_status, claimed_by=claimed_by)

    def next_item(self, annotator_id: str) -> QueueItem | None:
        """Claim the lowest-task-id open item; None when the queue is drained."""
        if not annotator_id:
            raise ValidationError("annotator_id must be non-empty")
        with self._lock:
            for task_id in sorted(self._entries):
                entry = self._entries[task_id]
                if entry.item.status == ItemStatus.OPEN:
                    self._transition(entry, ItemStatus.CLAIMED, annotator_id)
                    entry.claimed_at = self._clock()
                    return entry.item
        return None

    def claim(self, annotator_id: str, task_id: int) -> QueueItem:
        if not annotator_id:
            raise ValidationError("annotator_id must be non-empty")
        with self._lock:
            entry = self._require(task_id)
            if entry.item.status == ItemStatus.CLAIMED:
                raise ConflictError(f"task {task_id} is already claimed by {entry.item.claimed_by}")
            self._transition(entry, ItemStatus.CLAIMED, annotator_id)
            entry.claimed_at = self._clock()
            return entry.item

    def release(self, annotator_id: str, task_id: int) -> QueueItem:
        with self._lock:
            entry = self._require(task_id)
            if entry.item.status != ItemStatus.CLAIMED or entry.item.claimed_by != annotator_id:
                raise StateError(f"task {task_id} is not claimed by {annotator_id}")
            self._transition(entry, ItemStatus.OPEN, None)
            entry.claimed_at = None
            return entry.item

    def submit(
        self,
        annotator_id: str,
        task_id: int,
        feedback_text: str,
        refinement_text: str,
        program_index: int = 0,
        bug_tags: Sequence[str] | None = None,
        bugs_addressed: int | None = None,
    ) -> SubmissionReceipt:
        """Record a feedback+refinement pair and evaluate it.

        Test failures and oversized edits reject immediately; a passing
        submission parks as ``submitted`` until a reviewer verifies the
        feedback via :meth:`review_verify`.
        """
        if not feedback_text.strip():
            raise ValidationError("feedback_text must be non-empty")
        if not refinement_text.strip():
            raise ValidationError("refinement_text must be non-empty")
        with self._lock:
            entry = self._require(task_id)
            if entry.item.status != ItemStatus.CLAIMED:
                raise StateError(f"task {task_id} is not claimed")
            if entry.item.claimed_by != annotator_id:
                raise ConflictError(f"task {task_id} is claimed by {entry.item.claimed_by}")
            if not 0 <= program_index < len(entry.item.failing_programs):
                raise ValidationError(f"program_index {program_index} out of range")
            target = entry.item.failing_programs[program_index]
            claimed_at = entry.claimed_at

        # Sandbox evaluation happens outside the lock.
        outcome = self._evaluate(refinement_text, task_id)
        elapsed = self._clock() - claimed_at if claimed_at is not None else 0.0

        annotation = FeedbackAnnotation(
            task_id=task_id,
            target_program=target,
            feedback_text=feedback_text,
            author=Author.HUMAN,
            bug_tags=tuple(bug_tags) if bug_tags is not None else None,
            bugs_addressed=bugs_addressed,
        )
        submission = RefinementSubmission.create(annotation, refinement_text, eval=outcome)

        with self._lock:
            entry = self._require(task_id)
            if entry.item.status != ItemStatus.CLAIMED or entry.item.claimed_by != annotator_id:
                raise ConflictError(f"task {task_id} changed state during evaluation")
            self._transition(entry, ItemStatus.SUBMITTED, annotator_id)
            entry.annotation = annotation
            entry.submission = submission
            # Clauses checkable before review: test pass and edit distance.
            accepted: bool | None
            reason: RejectReason | None
            if not outcome.passed:
                self._transition(entry, ItemStatus.REJECTED, annotator_id)
                accepted, reason = False, RejectReason.TEST_FAILURE
            else:
                bound = 0.5 * max(len(refinement_text), len(target.program_text))
                if not submission.edit_distance < bound:
                    self._transition(entry, ItemStatus.REJECTED, annotator_id)
                    accepted, reason = False, RejectReason.EDIT_DISTANCE
                else:
                    accepted, reason = None, None
            receipt = SubmissionReceipt(
                task_id=task_id,
                status=entry.item.status,
                accepted=accepted,
                reason=reason,
                edit_distance=submission.edit_distance,
                eval=outcome,
                annotation_seconds=elapsed,
            )
            entry.receipt = receipt
            return receipt

    def review_verify(self, task_id: int, verified: bool) -> AcceptanceResult:
        """Reviewer verdict on a submitted item; finalizes its status."""
        with self._lock:
            entry = self._require(task_id)
            if entry.item.status != ItemStatus.SUBMITTED:
                raise StateError(f"task {task_id} is not awaiting review")
            annotation = replace(entry.annotation, verified_correct=verified)
            submission = replace(entry.submission, annotation_ref=annotation)
            result = accept_annotation(annotation, submission)
            entry.annotation = annotation
            entry.submission = submission
            self._transition(
                entry, ItemStatus.ACCEPTED if result.accepted else ItemStatus.REJECTED, entry.item.claimed_by
            )
            return result

    def export_accepted(self) -> list[dict[str, Any]]:
        """Interchange records for every accepted item, in task-id order."""
        with self._lock:
            records = []
            for task_id in sorted(self._entries):
                entry = self._entries[task_id]
                if entry.item.status == ItemStatus.ACCEPTED:
                    records.append(annotation_to_export_record(entry.annotation, entry.submission))
            return records
