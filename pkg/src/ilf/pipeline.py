"""Staged orchestration of the imitation-from-feedback loop.

A run lives in one directory of plain record files. Stages execute in
order: sample programs and keep the failures, attach feedback (human export
or feedback model), generate and filter refinements, assemble fine-tune
datasets, train out of process, evaluate. Every stage writes its artifacts,
appends structured events, then marks itself complete in state.json, so a
killed run resumes by skipping completed stages. All randomness flows from
three named seeds; with mock backends two runs from the same seeds produce
byte-identical artifacts.

Event records carry sequence numbers but no timestamps: the log is part of
the reproducible artifact set, and it is what the lineage audit replays to
prove every final training example descends from a failing original and a
passing refinement.
"""

from __future__ import annotations

import enum
import hashlib
import random
import shutil
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .annotation import (
    Author,
    FeedbackAnnotation,
    annotation_from_export_record,
    annotation_to_export_record,
    shuffle_feedback,
)
from .backends import BackendRegistry, CompletionRequest, Hyperparams, JobStatus, TrainerJob
from .errors import IlfError, ValidationError
from .metrics import PassReport, TaskTally, aggregate, format_pass_table
from .prompts import (
    EmptyCompletionError,
    RefinePromptTemplate,
    build_feedback_elicitation_prompt,
    build_generation_prompt,
    build_refine_prompt,
    extract_completion_code,
)
from .records import append_jsonl, read_json, read_jsonl, write_json, write_jsonl
from .sandbox import SandboxConfig, eval_batch
from .tasks import (
    Origin,
    ProgramSample,
    RenderedTask,
    SplitAssignment,
    SplitConfig,
    Task,
    assign_splits,
    load_dataset,
    render_task,
    task_to_record,
)

__all__ = [
    "PipelineError",
    "Seeds",
    "RunConfig",
    "ExampleKind",
    "FineTuneExample",
    "PipelineRun",
    "STAGE_ORDER",
    "audit_lineage",
    "run_scaling_experiment",
    "run_feedback_ablation",
]


class PipelineError(IlfError):
    pass


# Artifact file names inside a run directory.
F_CONFIG = "config.json"
F_TASKS = "tasks.jsonl"
F_SPLITS = "splits.json"
F_FLAGS = "flags.json"
F_SAMPLES = "samples.jsonl"
F_SAMPLE_TALLIES = "sample_tallies.jsonl"
F_ANNOTATIONS = "annotations.jsonl"
F_REFINEMENTS = "refinements.jsonl"
F_REFINE_TALLIES = "refine_tallies.jsonl"
F_FINAL_DATASET = "final_dataset.jsonl"
F_REFINER_DATASET = "refiner_dataset.jsonl"
F_TRAINER_JOB = "trainer_job.json"
F_REPORT_JSON = "report.json"
F_REPORT_TXT = "report.txt"
F_EVENTS = "events.jsonl"
F_STATE = "state.json"

STAGE_ORDER = ("sample", "collect_feedback", "refine", "assemble", "finetune", "evaluate")

EMPTY_COMPLETION_SENTINEL = "# empty completion"


def _derive_seed(seed: int, *parts: Any) -> int:
    """Stable per-purpose seed: hash the root seed with a label path."""
    label = "|".join(str(p) for p in (seed, *parts))
    return int.from_bytes(hashlib.sha256(label.encode("utf-8")).digest()[:8], "big")


@dataclass(frozen=True)
class Seeds:
    sampling: int = 0
    selection: int = 1
    shuffle: int = 2

    def to_record(self) -> dict[str, int]:
        return {"sampling": self.sampling, "selection": self.selection, "shuffle": self.shuffle}

    @classmethod
    def from_record(cls, record: Mapping[str, int]) -> "Seeds":
        return cls(record["sampling"], record["selection"], record["shuffle"])


@dataclass(frozen=True)
class RunConfig:
    samples_per_task: int = 30
    temperature: float = 0.8
    ks: tuple[int, ...] = (1, 10)
    seeds: Seeds = Seeds()
    generator_backend: str = "generator"
    refiner_backend: str = "refiner"
    feedback_backend: str = "feedback"
    trainer_backend: str = "trainer"
    split_config: SplitConfig = SplitConfig()
    hyperparams: Hyperparams = Hyperparams(learning_rate=1e-6, batch_size=32, epochs=2)
    refine_shots: int = 0
    feedback_shots: int = 0
    max_tokens: int = 512
    eval_parallelism: int = 1
    sandbox: SandboxConfig = SandboxConfig()

    def __post_init__(self):
        if not self.ks:
            raise ValidationError("ks must be non-empty")
        if self.samples_per_task < max(self.ks):
            raise ValidationError("samples_per_task must be >= max(ks)")
        if self.temperature < 0:
            raise ValidationError("temperature must be >= 0")

    def to_record(self) -> dict[str, Any]:
        return {
            "samples_per_task": self.samples_per_task,
            "temperature": self.temperature,
            "ks": list(self.ks),
            "seeds": self.seeds.to_record(),
            "generator_backend": self.generator_backend,
            "refiner_backend": self.refiner_backend,
            "feedback_backend": self.feedback_backend,
            "trainer_backend": self.trainer_backend,
            "split_config": self.split_config.to_record(),
            "hyperparams": self.hyperparams.to_record(),
            "refine_shots": self.refine_shots,
            "feedback_shots": self.feedback_shots,
            "max_tokens": self.max_tokens,
            "eval_parallelism": self.eval_parallelism,
            "sandbox": {
                "wall_clock_timeout": self.sandbox.wall_clock_timeout,
                "max_output_bytes": self.sandbox.max_output_bytes,
                "memory_limit_bytes": self.sandbox.memory_limit_bytes,
                "block_network": self.sandbox.block_network,
            },
        }

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> "RunConfig":
        sandbox = record.get("sandbox", {})
        return cls(
            samples_per_task=record.get("samples_per_task", 30),
            temperature=record.get("temperature", 0.8),
            ks=tuple(record.get("ks", (1, 10))),
            seeds=Seeds.from_record(record["seeds"]) if "seeds" in record else Seeds(),
            generator_backend=record.get("generator_backend", "generator"),
            refiner_backend=record.get("refiner_backend", "refiner"),
            feedback_backend=record.get("feedback_backend", "feedback"),
            trainer_backend=record.get("trainer_backend", "trainer"),
            split_config=(
                SplitConfig.from_record(record["split_config"]) if "split_config" in record else SplitConfig()
            ),
            hyperparams=(
                Hyperparams.from_record(record["hyperparams"])
                if "hyperparams" in record
                else Hyperparams(learning_rate=1e-6, batch_size=32, epochs=2)
            ),
            refine_shots=record.get("refine_shots", 0),
            feedback_shots=record.get("feedback_shots", 0),
            max_tokens=record.get("max_tokens", 512),
            eval_parallelism=record.get("eval_parallelism", 1),
            sandbox=SandboxConfig(
                wall_clock_timeout=sandbox.get("wall_clock_timeout", 10.0),
                max_output_bytes=sandbox.get("max_output_bytes", 65536),
                memory_limit_bytes=sandbox.get("memory_limit_bytes", 2 << 30),
                block_network=sandbox.get("block_network", True),
            ),
        )


class ExampleKind(str, enum.Enum):
    REFINER_TRAINING = "refiner_training"
    FINAL_TRAINING = "final_training"


@dataclass(frozen=True)
class FineTuneExample:
    input_text: str
    target_text: str
    kind: ExampleKind
    task_id: int
    source_index: int | None = None

    def __post_init__(self):
        if not self.input_text or not self.target_text:
            raise ValidationError("fine-tune example texts must be non-empty")

    def to_record(self) -> dict[str, Any]:
        return {
            "input_text": self.input_text,
            "target_text": self.target_text,
            "kind": self.kind.value,
            "task_id": self.task_id,
            "source_index": self.source_index,
        }

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> "FineTuneExample":
        return cls(
            input_text=record["input_text"],
            target_text=record["target_text"],
            kind=ExampleKind(record["kind"]),
            task_id=record["task_id"],
            source_index=record.get("source_index"),
        )


class PipelineRun:
    """One run directory plus the live handles it needs (backends, template).

    Stage methods are idempotent: a completed stage returns immediately, so
    ``resume()`` style call sequences and crash-restart both converge on the
    same artifacts.
    """

    def __init__(
        self,
        run_dir: str | Path,
        config: RunConfig,
        registry: BackendRegistry,
        template: RefinePromptTemplate = RefinePromptTemplate(),
    ):
        self.run_dir = Path(run_dir)
        self.config = config
        self.registry = registry
        self.template = template
        self._event_seq = self._last_event_seq()

    # ---------------------------------------------------------------- setup

    @classmethod
    def create(
        cls,
        run_dir: str | Path,
        config: RunConfig,
        registry: BackendRegistry,
        tasks: Sequence[Task],
        template: RefinePromptTemplate = RefinePromptTemplate(),
    ) -> "PipelineRun":
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        run = cls(run_dir, config, registry, template)
        if not (run_dir / F_CONFIG).exists():
            write_json(run_dir / F_CONFIG, config.to_record())
            write_jsonl(run_dir / F_TASKS, (task_to_record(t) for t in sorted(tasks, key=lambda t: t.id)))
            write_json(run_dir / F_STATE, {"completed_stages": []})
        return run

    @classmethod
    def load(
        cls,
        run_dir: str | Path,
        registry: BackendRegistry,
        template: RefinePromptTemplate = RefinePromptTemplate(),
    ) -> "PipelineRun":
        run_dir = Path(run_dir)
        if not (run_dir / F_CONFIG).exists():
            raise PipelineError(f"{run_dir} is not a run directory (missing {F_CONFIG})")
        config = RunConfig.from_record(read_json(run_dir / F_CONFIG))
        return cls(run_dir, config, registry, template)

    # ------------------------------------------------------------ plumbing

    def _path(self, name: str) -> Path:
        return self.run_dir / name

    def _state(self) -> dict[str, Any]:
        path = self._path(F_STATE)
        return read_json(path) if path.exists() else {"completed_stages": []}

    def completed(self, stage: str) -> bool:
        return stage in self._state()["completed_stages"]

    def _mark_complete(self, stage: str) -> None:
        state = self._state()
        if stage not in state["completed_stages"]:
            state["completed_stages"].append(stage)
        write_json(self._path(F_STATE), state)

    def _require_stage(self, stage: str) -> None:
        if not self.completed(stage):
            raise PipelineError(f"stage {stage!r} has not completed yet")

    def _last_event_seq(self) -> int:
        path = Path(self.run_dir) / F_EVENTS
        if not path.exists():
            return 0
        last = 0
        for record in read_jsonl(path):
            last = record["seq"]
        return last

    def _log(self, event: str, **fields: Any) -> None:
        self._event_seq += 1
        append_jsonl(self._path(F_EVENTS), [{"seq": self._event_seq, "event": event, **fields}])

    def tasks(self) -> list[Task]:
        return load_dataset(self._path(F_TASKS))

    def rendered(self) -> dict[int, RenderedTask]:
        return {t.id: render_task(t) for t in self.tasks()}

    def splits(self) -> SplitAssignment:
        return SplitAssignment.from_record(read_json(self._path(F_SPLITS)))

    def annotations(self) -> list[tuple[FeedbackAnnotation, str | None]]:
        return [annotation_from_export_record(r) for r in read_jsonl(self._path(F_ANNOTATIONS))]

    def _complete_text(self, backend: str, prompt: str, n: int, seed: int) -> list[str]:
        request = CompletionRequest(
            prompt=prompt,
            num_samples=n,
            temperature=self.config.temperature,
            max_tokens=self.config.max_tokens,
            stop_sequences=self.template.stop_sequences(),
            seed=seed,
        )
        return self.registry.complete(backend, request)

    def _eval_samples(
        self, samples: Sequence[ProgramSample], rendered: Mapping[int, RenderedTask], stage: str
    ) -> list[ProgramSample]:
        outcomes = eval_batch(samples, rendered, self.config.sandbox, self.config.eval_parallelism)
        evaluated = []
        for sample, outcome in zip(samples, outcomes):
            if outcome.failure_kind is not None and outcome.failure_kind.value == "harness_error":
                # Infrastructure fault, not candidate behavior: abort the
                # stage so the rerun can't silently pollute the pools.
                raise PipelineError(
                    f"harness error during {stage} on task {sample.task_id} sample {sample.index}: "
                    f"{outcome.per_test[-1].message if outcome.per_test else 'unknown'}"
                )
            evaluated.append(sample.with_eval(outcome))
        return evaluated

    # -------------------------------------------------------------- stages

    def stage_sample(self) -> dict[str, Any]:
        """Draw and evaluate the base model's samples; keep the failure pool."""
        stage = "sample"
        if self.completed(stage):
            return {"stage": stage, "skipped": True}
        self._log("stage_started", stage=stage)
        tasks = self.tasks()
        rendered = {t.id: render_task(t) for t in tasks}
        all_samples: list[ProgramSample] = []
        flags: dict[int, bool] = {}
        tallies: list[TaskTally] = []
        for task in sorted(tasks, key=lambda t: t.id):
            prompt = build_generation_prompt(rendered[task.id])
            seed = _derive_seed(self.config.seeds.sampling, "gen", task.id)
            completions = self._complete_text(self.config.generator_backend, prompt, self.config.samples_per_task, seed)
            samples = [
                ProgramSample(
                    task_id=task.id,
                    program_text=text.strip("\n") or EMPTY_COMPLETION_SENTINEL,
                    origin=Origin.BASE_MODEL,
                    temperature=self.config.temperature,
                    index=i,
                )
                for i, text in enumerate(completions)
            ]
            samples = self._eval_samples(samples, rendered, stage)
            c = sum(1 for s in samples if s.eval.passed)
            flags[task.id] = c == 0
            tallies.append(TaskTally(task_id=task.id, n=len(samples), c=c))
            all_samples.extend(samples)
            self._log("task_sampled", task_id=task.id, n=len(samples), c=c, zero_correct=c == 0)
        splits = assign_splits(tasks, flags, self.config.split_config)
        write_jsonl(self._path(F_SAMPLES), (s.to_record() for s in all_samples))
        write_jsonl(self._path(F_SAMPLE_TALLIES), (t.to_record() for t in tallies))
        write_json(self._path(F_FLAGS), {str(tid): flags[tid] for tid in sorted(flags)})
        write_json(self._path(F_SPLITS), splits.to_record())
        self._log("stage_completed", stage=stage)
        self._mark_complete(stage)
        return {"stage": stage, "tasks": len(tasks), "zero_correct": sum(flags.values())}

    def _failing_by_task(self) -> dict[int, list[ProgramSample]]:
        pools: dict[int, list[ProgramSample]] = {}
        for record in read_jsonl(self._path(F_SAMPLES)):
            sample = ProgramSample.from_record(record)
            if sample.eval is not None and not sample.eval.passed:
                pools.setdefault(sample.task_id, []).append(sample)
        return pools

    def eligible_feedback_tasks(self) -> list[int]:
        """Train-split tasks whose entire sample pool failed."""
        flags = read_json(self._path(F_FLAGS))
        train = self.splits().train_ids
        return sorted(tid for tid in train if flags.get(str(tid), False))

    def stage_collect_feedback(
        self,
        source: str = "model",
        export_path: str | Path | None = None,
        k: int | None = None,
    ) -> dict[str, Any]:
        """Attach one feedback annotation per eligible task.

        ``source="export"`` ingests an annotation-service export and keeps
        only records that target a failing program of a train-split task.
        ``source="model"`` elicits feedback from the feedback backend for
        each eligible task (optionally a seeded subsample of size k),
        targeting the shortest failing program.
        """
        stage = "collect_feedback"
        if self.completed(stage):
            return {"stage": stage, "skipped": True}
        self._require_stage("sample")
        self._log("stage_started", stage=stage)
        rendered = self.rendered()
        eligible = self.eligible_feedback_tasks()
        records: list[dict[str, Any]] = []
        annotated: set[int] = set()
        rejected = 0

        if source == "export":
            if export_path is None:
                raise ValidationError("export source requires export_path")
            for record in read_jsonl(export_path):
                try:
                    annotation, refinement = annotation_from_export_record(record)
                except (ValidationError, KeyError) as exc:
                    rejected += 1
                    self._log("annotation_rejected", reason=f"invalid: {exc}", task_id=record.get("task_id"))
                    continue
                if annotation.task_id not in eligible:
                    rejected += 1
                    self._log("annotation_rejected", reason="outside eligible train tasks", task_id=annotation.task_id)
                    continue
                if annotation.task_id in annotated:
                    rejected += 1
                    self._log("annotation_rejected", reason="duplicate task", task_id=annotation.task_id)
                    continue
                annotated.add(annotation.task_id)
                records.append(annotation_to_export_record(annotation, None) | {"refinement_text": refinement})
                self._log("annotation_ingested", task_id=annotation.task_id, author=annotation.author.value)
        elif source == "model":
            chosen = eligible
            if k is not None:
                if k > len(eligible):
                    raise PipelineError(f"k={k} exceeds the {len(eligible)} eligible tasks")
                rng = random.Random(_derive_seed(self.config.seeds.selection, "scaling", k))
                chosen = sorted(rng.sample(eligible, k))
            pools = self._failing_by_task()
            for tid in chosen:
                # Deterministic proxy for "easy to correct": shortest text.
                target = min(pools[tid], key=lambda s: (len(s.program_text), s.index))
                prompt = build_feedback_elicitation_prompt(
                    self.template, rendered[tid], target.program_text, self.config.feedback_shots
                )
                seed = _derive_seed(self.config.seeds.sampling, "feedback", tid)
                completions = self._complete_text(self.config.feedback_backend, prompt, 1, seed)
                try:
                    feedback_text = extract_completion_code(completions[0], self.template)
                except EmptyCompletionError:
                    self._log("annotation_rejected", reason="empty feedback", task_id=tid)
                    rejected += 1
                    continue
                annotation = FeedbackAnnotation(
                    task_id=tid,
                    target_program=target,
                    feedback_text=feedback_text,
                    author=Author.MODEL,
                )
                annotated.add(tid)
                records.append(annotation_to_export_record(annotation, None))
                self._log("annotation_ingested", task_id=tid, author="model")
        else:
            raise ValidationError(f"unknown feedback source {source!r}")

        pending = [tid for tid in eligible if tid not in annotated] if source == "export" or k is None else []
        write_jsonl(self._path(F_ANNOTATIONS), records)
        self._log("stage_completed", stage=stage, annotated=len(records), pending=len(pending), rejected=rejected)
        self._mark_complete(stage)
        return {"stage": stage, "annotated": len(records), "pending": pending, "rejected": rejected}

    def stage_refine(self, annotations_override: Sequence[FeedbackAnnotation] | None = None, suffix: str = "") -> dict[str, Any]:
        """Generate refinements for every annotation and keep the passers."""
        stage = "refine" + suffix
        if self.completed(stage):
            return {"stage": stage, "skipped": True}
        self._require_stage("collect_feedback")
        self._log("stage_started", stage=stage)
        rendered = self.rendered()
        annotations = annotations_override
        if annotations is None:
            annotations = [a for a, _ in self.annotations()]
        all_refinements: list[dict[str, Any]] = []
        tallies: list[TaskTally] = []
        for annotation in sorted(annotations, key=lambda a: a.task_id):
            tid = annotation.task_id
            prompt = build_refine_prompt(
                self.template,
                rendered[tid],
                annotation.target_program.program_text,
                annotation.feedback_text,
                self.config.refine_shots,
            )
            seed = _derive_seed(self.config.seeds.sampling, "refine", suffix, tid)
            completions = self._complete_text(self.config.refiner_backend, prompt, self.config.samples_per_task, seed)
            samples = []
            for i, raw in enumerate(completions):
                try:
                    text = extract_completion_code(raw, self.template)
                except EmptyCompletionError:
                    # Keep the slot so n stays samples_per_task.
                    text = EMPTY_COMPLETION_SENTINEL
                samples.append(
                    ProgramSample(
                        task_id=tid,
                        program_text=text,
                        origin=Origin.REFINER,
                        temperature=self.config.temperature,
                        index=i,
                    )
                )
            samples = self._eval_samples(samples, rendered, stage)
            c = sum(1 for s in samples if s.eval.passed)
            tallies.append(TaskTally(task_id=tid, n=len(samples), c=c))
            for s in samples:
                self._log("refinement_evaluated", stage=stage, task_id=tid, index=s.index, passed=s.eval.passed)
            all_refinements.extend(s.to_record() for s in samples)
        write_jsonl(self._path(F_REFINEMENTS if not suffix else f"refinements{suffix}.jsonl"), all_refinements)
        write_jsonl(self._path(F_REFINE_TALLIES if not suffix else f"refine_tallies{suffix}.jsonl"), (t.to_record() for t in tallies))
        self._log("stage_completed", stage=stage)
        self._mark_complete(stage)
        return {
            "stage": stage,
            "annotations": len(list(annotations)),
            "passing": sum(t.c for t in tallies),
            "tasks_with_pass": sum(1 for t in tallies if t.c >= 1),
        }

    def assemble_final_dataset(self) -> dict[str, Any]:
        """Pick one passing refinement per task, uniformly under the
        selection seed; tasks with no passer contribute nothing."""
        stage = "assemble"
        if self.completed(stage):
            return {"stage": stage, "skipped": True}
        self._require_stage("refine")
        self._log("stage_started", stage=stage)
        rendered = self.rendered()
        passing: dict[int, list[ProgramSample]] = {}
        for record in read_jsonl(self._path(F_REFINEMENTS)):
            sample = ProgramSample.from_record(record)
            if sample.eval is not None and sample.eval.passed:
                passing.setdefault(sample.task_id, []).append(sample)
        if not passing:
            raise PipelineError("no passing refinements; nothing to assemble")
        examples = []
        for tid in sorted(passing):
            pool = sorted(passing[tid], key=lambda s: s.index)
            rng = random.Random(_derive_seed(self.config.seeds.selection, "final", tid))
            choice = rng.choice(pool)
            examples.append(
                FineTuneExample(
                    input_text=rendered[tid].prompt_text,
                    target_text=choice.program_text,
                    kind=ExampleKind.FINAL_TRAINING,
                    task_id=tid,
                    source_index=choice.index,
                )
            )
            self._log("final_example_selected", task_id=tid, refinement_index=choice.index, pool_size=len(pool))
        write_jsonl(self._path(F_FINAL_DATASET), (e.to_record() for e in examples))
        self._log("stage_completed", stage=stage)
        self._mark_complete(stage)
        return {"stage": stage, "examples": len(examples)}

    def assemble_refiner_dataset(self, export_path: str | Path) -> dict[str, Any]:
        """Human feedback+refinement pairs from the refine split become
        training examples for the repair model."""
        refine_split = self.splits().refine_ids
        rendered = self.rendered()
        examples = []
        for record in read_jsonl(export_path):
            annotation, refinement = annotation_from_export_record(record)
            if annotation.task_id not in refine_split:
                raise PipelineError(
                    f"annotation for task {annotation.task_id} is not in the refine split; refusing to mix splits"
                )
            if not refinement:
                raise PipelineError(f"annotation for task {annotation.task_id} carries no human refinement")
            input_text = build_refine_prompt(
                self.template,
                rendered[annotation.task_id],
                annotation.target_program.program_text,
                annotation.feedback_text,
                shots=0,
            )
            examples.append(
                FineTuneExample(
                    input_text=input_text,
                    target_text=refinement,
                    kind=ExampleKind.REFINER_TRAINING,
                    task_id=annotation.task_id,
                )
            )
            self._log("refiner_example_assembled", task_id=annotation.task_id)
        if not examples:
            raise PipelineError("no refiner training examples assembled")
        write_jsonl(self._path(F_REFINER_DATASET), (e.to_record() for e in examples))
        return {"examples": len(examples)}

    def stage_finetune(self) -> TrainerJob:
        """Submit the final dataset to the trainer and wait for a verdict."""
        stage = "finetune"
        if self.completed(stage):
            return TrainerJob.from_record(read_json(self._path(F_TRAINER_JOB)))
        self._require_stage("assemble")
        self._log("stage_started", stage=stage)
        dataset = self._path(F_FINAL_DATASET)
        job = self.registry.submit_finetune(self.config.trainer_backend, str(dataset), self.config.hyperparams)
        while not job.status.terminal:
            job = self.registry.poll(self.config.trainer_backend, job)
        if job.status is JobStatus.FAILED:
            raise PipelineError(f"fine-tune job failed: {job.to_record()}")
        write_json(self._path(F_TRAINER_JOB), job.to_record())
        self._log("finetune_succeeded", job_id=job.job_id, backend_ref=job.resulting_backend_ref)
        self._log("stage_completed", stage=stage)
        self._mark_complete(stage)
        return job

    def _evaluate_backend(self, backend: str, task_ids: Sequence[int], rendered: Mapping[int, RenderedTask]) -> list[TaskTally]:
        tallies = []
        for tid in sorted(task_ids):
            prompt = build_generation_prompt(rendered[tid])
            seed = _derive_seed(self.config.seeds.sampling, "eval", backend, tid)
            completions = self._complete_text(backend, prompt, self.config.samples_per_task, seed)
            samples = [
                ProgramSample(
                    task_id=tid,
                    program_text=text.strip("\n") or EMPTY_COMPLETION_SENTINEL,
                    origin=Origin.BASE_MODEL,
                    temperature=self.config.temperature,
                    index=i,
                )
                for i, text in enumerate(completions)
            ]
            samples = self._eval_samples(samples, rendered, "evaluate")
            tallies.append(TaskTally(task_id=tid, n=len(samples), c=sum(1 for s in samples if s.eval.passed)))
        return tallies

    def stage_evaluate(self) -> dict[str, Any]:
        """Side-by-side evaluation of the base and fine-tuned backends on
        every test-split task, prior correctness notwithstanding."""
        stage = "evaluate"
        if self.completed(stage):
            return read_json(self._path(F_REPORT_JSON))
        self._require_stage("finetune")
        self._log("stage_started", stage=stage)
        job = TrainerJob.from_record(read_json(self._path(F_TRAINER_JOB)))
        if not job.resulting_backend_ref:
            raise PipelineError("trainer job carries no resulting backend reference")
        rendered = self.rendered()
        test_ids = sorted(self.splits().test_ids)
        if not test_ids:
            raise PipelineError("test split is empty")
        baseline_tallies = self._evaluate_backend(self.config.generator_backend, test_ids, rendered)
        tuned_tallies = self._evaluate_backend(job.resulting_backend_ref, test_ids, rendered)
        baseline = aggregate(baseline_tallies, self.config.ks)
        tuned = aggregate(tuned_tallies, self.config.ks)
        report = {
            "task_count": len(test_ids),
            "baseline_backend": self.config.generator_backend,
            "finetuned_backend": job.resulting_backend_ref,
            "baseline": baseline.to_record(),
            "finetuned": tuned.to_record(),
        }
        write_json(self._path(F_REPORT_JSON), report)
        table = format_pass_table({"baseline": baseline, "finetuned": tuned})
        self._path(F_REPORT_TXT).write_text(table, encoding="utf-8")
        self._log("stage_completed", stage=stage)
        self._mark_complete(stage)
        return report

    def run_all(self, feedback_source: str = "model", export_path: str | Path | None = None, k: int | None = None) -> dict[str, Any]:
        self.stage_sample()
        self.stage_collect_feedback(source=feedback_source, export_path=export_path, k=k)
        self.stage_refine()
        self.assemble_final_dataset()
        self.stage_finetune()
        return self.stage_evaluate()

    def report_text(self) -> str:
        """Human-readable run summary built from artifacts on disk."""
        lines = []
        state = self._state()
        lines.append(f"run directory: {self.run_dir}")
        lines.append(f"completed stages: {', '.join(state['completed_stages']) or '(none)'}")
        if self._path(F_FLAGS).exists():
            flags = read_json(self._path(F_FLAGS))
            zero = sum(1 for v in flags.values() if v)
            total = len(flags)
            one_plus = 1.0 - zero / total if total else 0.0
            lines.append(f"tasks sampled: {total}; zero-correct: {zero}; one-plus-correct rate: {one_plus:.3f}")
        if self._path(F_ANNOTATIONS).exists():
            lines.append(f"annotations: {sum(1 for _ in read_jsonl(self._path(F_ANNOTATIONS)))}")
        if self._path(F_REFINE_TALLIES).exists():
            tallies = [TaskTally.from_record(r) for r in read_jsonl(self._path(F_REFINE_TALLIES))]
            with_pass = sum(1 for t in tallies if t.c >= 1)
            lines.append(
                f"refined tasks: {len(tallies)}; with passing refinement: {with_pass}"
                + (f" ({with_pass/len(tallies):.0%})" if tallies else "")
            )
        if self._path(F_FINAL_DATASET).exists():
            lines.append(f"final dataset examples: {sum(1 for _ in read_jsonl(self._path(F_FINAL_DATASET)))}")
        if self._path(F_REPORT_TXT).exists():
            lines.append("")
            lines.append(self._path(F_REPORT_TXT).read_text(encoding="utf-8").rstrip("\n"))
        return "\n".join(lines) + "\n"


def audit_lineage(run_dir: str | Path) -> dict[str, Any]:
    """Replay the event log to prove provenance of every final example.

    An example is traced when its selection event exists, the selected
    refinement was evaluated passing, and its task's annotation targeted a
    failing program. Split hygiene cross-checks that no training task sits
    in the test split.
    """
    run_dir = Path(run_dir)
    examples = [FineTuneExample.from_record(r) for r in read_jsonl(run_dir / F_FINAL_DATASET)]
    events = list(read_jsonl(run_dir / F_EVENTS))
    splits = SplitAssignment.from_record(read_json(run_dir / F_SPLITS))

    selected = {(e["task_id"], e["refinement_index"]) for e in events if e["event"] == "final_example_selected"}
    refinement_passed = {
        (e["task_id"], e["index"])
        for e in events
        if e["event"] == "refinement_evaluated" and e["passed"] and e.get("stage", "refine") == "refine"
    }
    annotated_tasks = {e["task_id"] for e in events if e["event"] == "annotation_ingested"}
    sampled_zero = {e["task_id"] for e in events if e["event"] == "task_sampled" and e["zero_correct"]}

    violations = []
    traced = 0
    for example in examples:
        key = (example.task_id, example.source_index)
        problems = []
        if key not in selected:
            problems.append("no selection event")
        if key not in refinement_passed:
            problems.append("refinement not recorded as passing")
        if example.task_id not in annotated_tasks:
            problems.append("no ingested annotation")
        if example.task_id not in sampled_zero:
            problems.append("task was not zero-correct at sampling")
        if example.task_id in splits.test_ids:
            problems.append("training task sits in the test split")
        if example.task_id not in splits.train_ids:
            problems.append("training task is outside the train split")
        if problems:
            violations.append({"task_id": example.task_id, "problems": problems})
        else:
            traced += 1
    return {
        "examples": len(examples),
        "traced": traced,
        "traced_fraction": traced / len(examples) if examples else 0.0,
        "violations": violations,
    }


def _copy_artifacts(src: Path, dst: Path, names: Iterable[str]) -> None:
    dst.mkdir(parents=True, exist_ok=True)
    for name in names:
        if (src / name).exists():
            shutil.copyfile(src / name, dst / name)


def run_scaling_experiment(
    base_run: PipelineRun,
    k_values: Sequence[int],
    feedback_source: str = "model",
) -> dict[int, PassReport]:
    """Re-run the feedback/refine/tune tail at several annotation budgets.

    Each k gets its own sub-directory seeded from the parent's sampling
    artifacts, so every budget sees identical base samples and splits.
    """
    if not k_values:
        raise ValidationError("k_values must be non-empty")
    base_run.stage_sample()
    eligible = len(base_run.eligible_feedback_tasks())
    reports: dict[int, PassReport] = {}
    for k in sorted(k_values):
        if k > eligible:
            raise PipelineError(f"k={k} exceeds the {eligible} eligible zero-correct tasks")
        sub_dir = base_run.run_dir / "scaling" / f"k{k}"
        sub_dir.mkdir(parents=True, exist_ok=True)
        _copy_artifacts(
            base_run.run_dir,
            sub_dir,
            (F_CONFIG, F_TASKS, F_SAMPLES, F_SAMPLE_TALLIES, F_FLAGS, F_SPLITS),
        )
        state_path = sub_dir / F_STATE
        if not state_path.exists():
            write_json(state_path, {"completed_stages": ["sample"]})
        sub_run = PipelineRun(sub_dir, base_run.config, base_run.registry, base_run.template)
        sub_run.stage_collect_feedback(source=feedback_source, k=k)
        sub_run.stage_refine()
        sub_run.assemble_final_dataset()
        sub_run.stage_finetune()
        report = sub_run.stage_evaluate()
        reports[k] = PassReport.from_record(report["finetuned"])
    write_json(base_run.run_dir / "scaling" / "scaling_report.json", {str(k): reports[k].to_record() for k in sorted(reports)})
    return reports


def run_feedback_ablation(run: PipelineRun) -> dict[str, dict[str, Any]]:
    """Matched versus deranged feedback, same refiner, same seeds.

    Returns per-arm refinement pass reports computed over the refine
    tallies; the deranged arm reuses the matched annotations with feedback
    reassigned across tasks.
    """
    run._require_stage("collect_feedback")
    annotations = [a for a, _ in run.annotations()]
    if len(annotations) < 2:
        raise PipelineError("feedback ablation needs at least 2 annotations")
    run.stage_refine()
    shuffled = shuffle_feedback(annotations, run.config.seeds.shuffle)
    run.stage_refine(annotations_override=shuffled, suffix="_shuffled")

    def _report(tally_file: str) -> dict[str, Any]:
        tallies = [TaskTally.from_record(r) for r in read_jsonl(run._path(tally_file))]
        ks = tuple(k for k in run.config.ks if k <= min(t.n for t in tallies))
        return aggregate(tallies, ks or (1,)).to_record()

    result = {
        "matched": _report(F_REFINE_TALLIES),
        "shuffled": _report("refine_tallies_shuffled.jsonl"),
    }
    write_json(run._path("ablation_report.json"), result)
    return result
