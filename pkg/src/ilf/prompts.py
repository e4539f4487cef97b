"""Prompt construction for generation, refinement, and feedback elicitation.

A refinement prompt is a sequence of marker-delimited sections: task, the
incorrect program, the feedback, and the refined code. Few-shot exemplars
are complete filled instances placed before the query; the query stops at
the marker whose content the model must produce. Inputs containing a marker
string are rejected outright, which keeps fill/parse an exact round-trip.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

from .errors import IlfError, ValidationError
from .records import read_jsonl
from .tasks import RenderedTask

__all__ = [
    "PromptError",
    "MarkerCollisionError",
    "EmptyCompletionError",
    "Exemplar",
    "RefinePromptTemplate",
    "build_generation_prompt",
    "build_refine_prompt",
    "build_feedback_elicitation_prompt",
    "extract_completion_code",
    "parse_refine_prompt",
    "load_template",
    "save_template",
    "load_exemplars",
]


class PromptError(IlfError):
    pass


class MarkerCollisionError(PromptError):
    """An input contains a section marker; refusing to build an ambiguous prompt."""


class EmptyCompletionError(PromptError):
    """Nothing left of a completion after truncation."""


@dataclass(frozen=True)
class Exemplar:
    """One complete worked instance used for few-shot prompting."""

    task_text: str
    old_code: str
    feedback: str
    new_code: str

    def __post_init__(self):
        for name in ("task_text", "old_code", "feedback", "new_code"):
            if not getattr(self, name).strip():
                raise ValidationError(f"exemplar field {name} must be non-empty")


@dataclass(frozen=True)
class RefinePromptTemplate:
    task_marker: str = "### Task"
    old_code_marker: str = "### Old Code"
    feedback_marker: str = "### Feedback"
    new_code_marker: str = "### New Code"
    exemplars: tuple[Exemplar, ...] = ()

    def __post_init__(self):
        markers = self.markers
        if any(not m for m in markers):
            raise ValidationError("markers must be non-empty")
        if len(set(markers)) != len(markers):
            raise ValidationError("markers must be pairwise distinct")
        for a in markers:
            for b in markers:
                if a != b and a in b:
                    raise ValidationError(f"marker {a!r} is a substring of {b!r}")

    @property
    def markers(self) -> tuple[str, str, str, str]:
        return (self.task_marker, self.old_code_marker, self.feedback_marker, self.new_code_marker)

    def _check(self, content: str, field: str) -> str:
        for marker in self.markers:
            if marker in content:
                raise MarkerCollisionError(f"{field} contains section marker {marker!r}")
        return content

    def _section(self, marker: str, content: str) -> str:
        return f"{marker}\n{content}\n"

    def fill_instance(self, task_text: str, old_code: str, feedback: str, new_code: str) -> str:
        """One fully filled instance, all four sections."""
        return (
            self._section(self.task_marker, self._check(task_text, "task_text"))
            + self._section(self.old_code_marker, self._check(old_code, "old_code"))
            + self._section(self.feedback_marker, self._check(feedback, "feedback"))
            + self._section(self.new_code_marker, self._check(new_code, "new_code"))
        )

    def exemplar_block(self, shots: int) -> str:
        if shots < 0:
            raise ValidationError("shots must be >= 0")
        if shots > len(self.exemplars):
            raise PromptError(f"requested {shots} shots but only {len(self.exemplars)} exemplars are loaded")
        # Instances abut directly; every section is exactly marker\ncontent\n,
        # which keeps parsing exact even for content ending in a newline.
        return "".join(
            self.fill_instance(ex.task_text, ex.old_code, ex.feedback, ex.new_code) for ex in self.exemplars[:shots]
        )

    def stop_sequences(self) -> tuple[str, ...]:
        # Markers double as stop sequences so a model cannot run past its
        # section into a fabricated next one.
        return self.markers


DEFAULT_TEMPLATE = RefinePromptTemplate()


def build_generation_prompt(task: RenderedTask) -> str:
    """The code-generation prompt is the rendered task text, unchanged."""
    return task.prompt_text


def build_refine_prompt(
    template: RefinePromptTemplate,
    task: RenderedTask,
    program: str,
    feedback: str,
    shots: int = 0,
) -> str:
    """Exemplars, then the query filled through feedback, stopping at the
    refined-code marker: the completion point."""
    if not program.strip():
        raise ValidationError("program must be non-empty")
    if not feedback.strip():
        raise ValidationError("feedback must be non-empty")
    query = (
        template._section(template.task_marker, template._check(task.prompt_text, "task"))
        + template._section(template.old_code_marker, template._check(program, "program"))
        + template._section(template.feedback_marker, template._check(feedback, "feedback"))
        + template.new_code_marker
        + "\n"
    )
    return template.exemplar_block(shots) + query


def build_feedback_elicitation_prompt(
    template: RefinePromptTemplate,
    task: RenderedTask,
    program: str,
    shots: int = 0,
) -> str:
    """Prompt a model to write the feedback itself; stops at the feedback
    marker. Exemplars show task, code, and feedback sections only."""
    if not program.strip():
        raise ValidationError("program must be non-empty")
    if shots > len(template.exemplars):
        raise PromptError(f"requested {shots} shots but only {len(template.exemplars)} exemplars are loaded")
    parts = [
        template._section(template.task_marker, template._check(ex.task_text, "task_text"))
        + template._section(template.old_code_marker, template._check(ex.old_code, "old_code"))
        + template._section(template.feedback_marker, template._check(ex.feedback, "feedback"))
        for ex in template.exemplars[:shots]
    ]
    query = (
        template._section(template.task_marker, template._check(task.prompt_text, "task"))
        + template._section(template.old_code_marker, template._check(program, "program"))
        + template.feedback_marker
        + "\n"
    )
    return "".join(parts) + query


def extract_completion_code(
    raw_completion: str,
    template: RefinePromptTemplate,
    stop_sequences: Sequence[str] = (),
) -> str:
    """Cut the completion at the first marker or stop sequence, then trim."""
    cut = len(raw_completion)
    for token in (*template.markers, *stop_sequences):
        index = raw_completion.find(token)
        if index != -1:
            cut = min(cut, index)
    text = raw_completion[:cut].rstrip()
    if not text.strip():
        raise EmptyCompletionError("completion is empty after truncation")
    return text


def _strip_one_newline(chunk: str) -> str:
    # fill_instance appends exactly one newline per section; remove exactly
    # one so content ending in '\n' round-trips unchanged.
    return chunk[:-1] if chunk.endswith("\n") else chunk


def parse_refine_prompt(template: RefinePromptTemplate, text: str) -> list[dict[str, str | None]]:
    """Inverse of prompt building: recover each instance's sections.

    The final instance may be a query with a trailing empty section (its
    content is None): that is the completion point.
    """
    marker_by_name = {
        "task": template.task_marker,
        "old_code": template.old_code_marker,
        "feedback": template.feedback_marker,
        "new_code": template.new_code_marker,
    }
    pattern = re.compile(
        "|".join(f"(?P<{name}>{re.escape(marker)})" for name, marker in marker_by_name.items())
    )
    hits = [(m.start(), m.end(), m.lastgroup) for m in pattern.finditer(text)]
    if not hits:
        raise PromptError("no section markers found")
    instances: list[dict[str, str | None]] = []
    current: dict[str, str | None] = {}
    for i, (start, end, name) in enumerate(hits):
        if name == "task" and current:
            instances.append(current)
            current = {}
        if name in current:
            raise PromptError(f"duplicate {name} section within one instance")
        is_last = i + 1 == len(hits)
        next_start = hits[i + 1][0] if not is_last else len(text)
        raw = text[end:next_start]
        if raw == "" or (is_last and raw == "\n"):
            # A bare trailing marker is the completion point of a query.
            content: str | None = None
        elif raw.startswith("\n"):
            content = _strip_one_newline(raw[1:])
        else:
            raise PromptError(f"marker {name} is not followed by a newline")
        current[name] = content
    if current:
        instances.append(current)
    return instances


def save_template(template: RefinePromptTemplate, path: str | Path) -> None:
    """Persist the skeleton as plain text with named placeholders."""
    skeleton = (
        f"{template.task_marker}\n{{task}}\n"
        f"{template.old_code_marker}\n{{old_code}}\n"
        f"{template.feedback_marker}\n{{feedback}}\n"
        f"{template.new_code_marker}\n{{new_code}}\n"
    )
    Path(path).write_text(skeleton, encoding="utf-8")


def load_template(path: str | Path, exemplars: Sequence[Exemplar] = ()) -> RefinePromptTemplate:
    text = Path(path).read_text(encoding="utf-8")
    match = re.fullmatch(
        r"(?s)(?P<task>.+?)\n\{task\}\n"
        r"(?P<old>.+?)\n\{old_code\}\n"
        r"(?P<feedback>.+?)\n\{feedback\}\n"
        r"(?P<new>.+?)\n\{new_code\}\n?",
        text,
    )
    if match is None:
        raise PromptError(f"template file {path} does not match the skeleton shape")
    return RefinePromptTemplate(
        task_marker=match["task"],
        old_code_marker=match["old"],
        feedback_marker=match["feedback"],
        new_code_marker=match["new"],
        exemplars=tuple(exemplars),
    )


def load_exemplars(path: str | Path, tasks: Mapping[int, RenderedTask]) -> tuple[Exemplar, ...]:
    """Read exemplars from annotation-format records.

    Each record must carry a refinement; the task text comes from the task
    lookup so exemplar files stay in the same shape the annotation service
    exports.
    """
    exemplars = []
    for record in read_jsonl(path):
        task_id = record["task_id"]
        if task_id not in tasks:
            raise PromptError(f"exemplar references unknown task {task_id}")
        refinement = record.get("refinement_text")
        if not refinement:
            raise PromptError(f"exemplar for task {task_id} has no refinement_text")
        exemplars.append(
            Exemplar(
                task_text=tasks[task_id].prompt_text,
                old_code=record["target_program"]["program_text"],
                feedback=record["feedback_text"],
                new_code=refinement,
            )
        )
    return tuple(exemplars)
