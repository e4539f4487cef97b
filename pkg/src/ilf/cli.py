"""Command-line entry points for driving runs and serving annotations.

Every pipeline verb takes a run directory and a config file. The config is
a JSON document with three top-level keys: ``run`` (run parameters),
``dataset`` (path to the task record file), and ``backends`` (named backend
definitions, mock or http). Artifacts land in the run directory as plain
record files.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Mapping

from .backends import BackendRegistry, HttpBackend, HttpTrainer, MockBackend, MockTrainer, ScriptRule
from .errors import IlfError, ValidationError
from .pipeline import PipelineRun, RunConfig, audit_lineage, run_feedback_ablation, run_scaling_experiment
from .records import dumps_record, read_json, read_jsonl
from .sandbox import SandboxConfig
from .tasks import ProgramSample, load_dataset, load_splits

__all__ = ["main", "build_registry", "load_config"]


def build_registry(spec: Mapping[str, Any]) -> BackendRegistry:
    """Construct backends from their config records."""
    registry = BackendRegistry()
    for name, entry in spec.items():
        kind = entry.get("kind", "mock")
        if kind == "mock":
            registry.register(
                name,
                MockBackend(
                    rules=[ScriptRule(r["contains"], tuple(r["completions"])) for r in entry.get("rules", [])],
                    default_completions=tuple(entry.get("default_completions", ("pass",))),
                    scripted_logprobs=entry.get("scripted_logprobs"),
                    default_token_logprob=entry.get("default_token_logprob", -1.0),
                ),
            )
        elif kind == "mock_trainer":
            registry.register(
                name,
                MockTrainer(
                    graded_results=[(int(t), ref) for t, ref in entry.get("graded_results", [[0, "mock-finetuned"]])],
                    strict_sweep=entry.get("strict_sweep", False),
                ),
            )
        elif kind == "http":
            registry.register(
                name,
                HttpBackend(
                    base_url=entry["base_url"],
                    model=entry["model"],
                    api_key_env=entry.get("api_key_env", "ILF_API_KEY"),
                    timeout=entry.get("timeout", 60.0),
                    max_retries=entry.get("max_retries", 3),
                ),
            )
        elif kind == "http_trainer":
            registry.register(
                name,
                HttpTrainer(
                    base_url=entry["base_url"],
                    api_key_env=entry.get("api_key_env", "ILF_API_KEY"),
                    timeout=entry.get("timeout", 60.0),
                    max_retries=entry.get("max_retries", 3),
                ),
            )
        else:
            raise ValidationError(f"unknown backend kind {kind!r} for {name!r}")
    return registry


def load_config(path: str | Path) -> tuple[RunConfig, BackendRegistry, str | None]:
    record = read_json(path)
    config = RunConfig.from_record(record.get("run", {}))
    registry = build_registry(record.get("backends", {}))
    return config, registry, record.get("dataset")


def _open_run(args: argparse.Namespace, need_dataset: bool = False) -> PipelineRun:
    config, registry, dataset = load_config(args.config)
    run_dir = Path(args.run_dir)
    if (run_dir / "config.json").exists():
        return PipelineRun.load(run_dir, registry)
    if need_dataset:
        if dataset is None:
            raise ValidationError("config has no 'dataset' path and the run directory is uninitialized")
        tasks = load_dataset(dataset)
        return PipelineRun.create(run_dir, config, registry, tasks)
    raise ValidationError(f"{run_dir} is not an initialized run directory")


def _emit(record: Mapping[str, Any]) -> None:
    print(dumps_record(dict(record)))


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="ilf", description="Feedback-driven code generation pipeline.")
    sub = parser.add_subparsers(dest="verb", required=True)

    def add_run_verb(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--run-dir", required=True)
        p.add_argument("--config", required=True)
        return p

    add_run_verb("sample", "sample programs from the generator and evaluate them")
    p = add_run_verb("collect-feedback", "attach feedback annotations to failing programs")
    p.add_argument("--source", choices=["model", "export"], default="model")
    p.add_argument("--export", dest="export_path", default=None, help="annotation-service export file")
    p.add_argument("--k", type=int, default=None, help="subsample size for model feedback")
    add_run_verb("refine", "generate refinements and keep the passing ones")
    p = add_run_verb("assemble", "assemble fine-tune datasets")
    p.add_argument("--refiner-export", default=None, help="also build the refiner dataset from this export")
    add_run_verb("finetune", "submit the final dataset to the trainer")
    add_run_verb("evaluate", "evaluate baseline and fine-tuned backends on the test split")
    p = add_run_verb("scaling-run", "run the feedback-budget scaling experiment")
    p.add_argument("--k-values", required=True, help="comma-separated budgets, e.g. 2,4,8")
    p = add_run_verb("ablation", "matched versus shuffled feedback comparison")
    p = sub.add_parser("report", help="print a run summary")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--config", default=None)
    p = sub.add_parser("audit", help="lineage audit of the final dataset")
    p.add_argument("--run-dir", required=True)
    p = sub.add_parser("serve", help="serve the annotation queue over HTTP")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--split", choices=["refine", "train", "both"], default="both")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)
    p.add_argument("--timeout", type=float, default=10.0, help="sandbox wall-clock budget per evaluation")

    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except IlfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _dispatch(args: argparse.Namespace) -> int:
    if args.verb == "sample":
        run = _open_run(args, need_dataset=True)
        _emit(run.stage_sample())
    elif args.verb == "collect-feedback":
        run = _open_run(args)
        _emit(run.stage_collect_feedback(source=args.source, export_path=args.export_path, k=args.k))
    elif args.verb == "refine":
        run = _open_run(args)
        _emit(run.stage_refine())
    elif args.verb == "assemble":
        run = _open_run(args)
        summary = run.assemble_final_dataset()
        if args.refiner_export:
            summary = dict(summary)
            summary["refiner_dataset"] = run.assemble_refiner_dataset(args.refiner_export)
        _emit(summary)
    elif args.verb == "finetune":
        run = _open_run(args)
        _emit(run.stage_finetune().to_record())
    elif args.verb == "evaluate":
        run = _open_run(args)
        _emit(run.stage_evaluate())
    elif args.verb == "scaling-run":
        run = _open_run(args, need_dataset=True)
        k_values = [int(k) for k in args.k_values.split(",") if k]
        reports = run_scaling_experiment(run, k_values)
        _emit({str(k): reports[k].to_record() for k in sorted(reports)})
    elif args.verb == "ablation":
        run = _open_run(args)
        _emit(run_feedback_ablation(run))
    elif args.verb == "report":
        if args.config:
            run = _open_run(args)
        else:
            run = PipelineRun.load(args.run_dir, BackendRegistry())
        print(run.report_text(), end="")
    elif args.verb == "audit":
        _emit(audit_lineage(args.run_dir))
    elif args.verb == "serve":
        _serve(args)
    else:  # pragma: no cover - argparse enforces the verb set
        raise ValidationError(f"unknown verb {args.verb!r}")
    return 0


def _serve(args: argparse.Namespace) -> None:
    """Build the annotation queue from run artifacts and serve it."""
    import uvicorn

    from .annotation import AnnotationQueue
    from .sandbox import run_suite
    from .service import build_app
    from .tasks import render_task

    run_dir = Path(args.run_dir)
    tasks = {t.id: t for t in load_dataset(run_dir / "tasks.jsonl")}
    rendered = {tid: render_task(t) for tid, t in tasks.items()}
    splits = load_splits(run_dir / "splits.json")
    wanted = {
        "refine": splits.refine_ids,
        "train": splits.train_ids,
        "both": splits.refine_ids | splits.train_ids,
    }[args.split]

    sandbox = SandboxConfig(wall_clock_timeout=args.timeout)

    def evaluate(program_text: str, task_id: int):
        return run_suite(program_text, rendered[task_id], sandbox)

    queue = AnnotationQueue(evaluate)
    pools: dict[int, list[ProgramSample]] = {}
    for record in read_jsonl(run_dir / "samples.jsonl"):
        sample = ProgramSample.from_record(record)
        if sample.task_id in wanted and sample.eval is not None and not sample.eval.passed:
            pools.setdefault(sample.task_id, []).append(sample)
    for tid in sorted(pools):
        queue.add_item(tid, pools[tid])

    app = build_app(queue, rendered, sandbox)
    print(json.dumps({"serving": len(pools), "host": args.host, "port": args.port}))
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")


if __name__ == "__main__":
    sys.exit(main())
