"""Imitation learning from language feedback for code generation.

The package splits into a core model (tasks, samples, splits), a sandboxed
evaluator, metrics, model backends, prompt construction, an annotation
queue with an HTTP service, and the staged pipeline that ties them into the
sample / feedback / refine / fine-tune loop.
"""

from .annotation import (
    AcceptanceResult,
    AnnotationQueue,
    Author,
    FeedbackAnnotation,
    RefinementSubmission,
    accept_annotation,
    levenshtein,
    shuffle_feedback,
)
from .backends import (
    BackendRegistry,
    CompletionRequest,
    Hyperparams,
    HttpBackend,
    HttpTrainer,
    MockBackend,
    MockTrainer,
    ScoringRequest,
    ScriptRule,
    TrainerJob,
)
from .errors import IlfError, ValidationError
from .metrics import (
    FeedbackStats,
    PassReport,
    TaskTally,
    aggregate,
    feedback_stats,
    pass_at_k,
    pass_rate_by_bug_count,
    perplexity,
)
from .pipeline import (
    ExampleKind,
    FineTuneExample,
    PipelineRun,
    RunConfig,
    Seeds,
    audit_lineage,
    run_feedback_ablation,
    run_scaling_experiment,
)
from .prompts import (
    RefinePromptTemplate,
    build_feedback_elicitation_prompt,
    build_generation_prompt,
    build_refine_prompt,
    extract_completion_code,
    parse_refine_prompt,
)
from .sandbox import EvalOutcome, FailureKind, SandboxConfig, TestResult, eval_batch, eval_program, run_suite
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
)

__version__ = "0.1.0"

__all__ = [
    "AcceptanceResult",
    "AnnotationQueue",
    "Author",
    "BackendRegistry",
    "CompletionRequest",
    "EvalOutcome",
    "ExampleKind",
    "FailureKind",
    "FeedbackAnnotation",
    "FeedbackStats",
    "FineTuneExample",
    "Hyperparams",
    "HttpBackend",
    "HttpTrainer",
    "IlfError",
    "MockBackend",
    "MockTrainer",
    "Origin",
    "PassReport",
    "PipelineRun",
    "ProgramSample",
    "RefinePromptTemplate",
    "RefinementSubmission",
    "RenderedTask",
    "RunConfig",
    "SandboxConfig",
    "ScoringRequest",
    "ScriptRule",
    "Seeds",
    "SplitAssignment",
    "SplitConfig",
    "Task",
    "TaskTally",
    "TestResult",
    "TrainerJob",
    "ValidationError",
    "accept_annotation",
    "aggregate",
    "assign_splits",
    "audit_lineage",
    "build_feedback_elicitation_prompt",
    "build_generation_prompt",
    "build_refine_prompt",
    "eval_batch",
    "eval_program",
    "extract_completion_code",
    "feedback_stats",
    "levenshtein",
    "load_dataset",
    "parse_refine_prompt",
    "pass_at_k",
    "pass_rate_by_bug_count",
    "perplexity",
    "render_task",
    "run_feedback_ablation",
    "run_scaling_experiment",
    "run_suite",
    "shuffle_feedback",
    "__version__",
]
