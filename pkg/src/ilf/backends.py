"""Completion, scoring, and trainer backends behind a uniform interface.

Models stay out of process: a backend is either an HTTP client speaking the
common completion-API shape, or a deterministic scripted mock. Fine-tuning
is likewise delegated to a trainer backend that accepts a dataset reference
and hyperparameters and reports job status. The registry maps string
references to live backends so pipeline configs can name models without
holding objects.
"""

from __future__ import annotations

import enum
import json
import logging
import os
import random
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Protocol, Sequence, runtime_checkable

import httpx

from .errors import IlfError, ValidationError

__all__ = [
    "CompletionRequest",
    "ScoringRequest",
    "ScoringResponse",
    "Hyperparams",
    "JobStatus",
    "TrainerJob",
    "CompletionBackend",
    "ScoringBackend",
    "TrainerBackend",
    "ScriptRule",
    "MockBackend",
    "MockTrainer",
    "HttpBackend",
    "HttpTrainer",
    "BackendRegistry",
    "BackendError",
    "TransportError",
    "ProtocolError",
    "CapabilityError",
    "DEFAULT_SWEEP",
]

logger = logging.getLogger(__name__)

# Appendix-style sweep domains used when a trainer runs in strict mode.
DEFAULT_SWEEP: Mapping[str, tuple] = {
    "learning_rate": (1e-6, 5e-6, 1e-5),
    "batch_size": (32, 64, 128),
    "epochs": (1, 2, 5),
}

RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})


class BackendError(IlfError):
    pass


class TransportError(BackendError):
    """Transient transport failure that survived every retry."""


class ProtocolError(BackendError):
    """The remote answered, but not in the shape the protocol promises."""


class CapabilityError(BackendError):
    """The referenced backend does not support the requested operation."""


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    num_samples: int = 30
    temperature: float = 0.8
    max_tokens: int = 512
    stop_sequences: tuple[str, ...] = ()
    seed: int | None = None

    def __post_init__(self):
        if not self.prompt:
            raise ValidationError("prompt must be non-empty")
        if self.num_samples < 1:
            raise ValidationError("num_samples must be >= 1")
        if self.temperature < 0:
            raise ValidationError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValidationError("max_tokens must be >= 1")


@dataclass(frozen=True)
class ScoringRequest:
    text: str

    def __post_init__(self):
        if not self.text:
            raise ValidationError("text must be non-empty")


@dataclass(frozen=True)
class ScoringResponse:
    token_logprobs: tuple[float, ...]

    def __post_init__(self):
        if not self.token_logprobs:
            raise ProtocolError("scoring response carries no tokens")

    @property
    def token_count(self) -> int:
        return len(self.token_logprobs)

    @property
    def total_logprob(self) -> float:
        return sum(self.token_logprobs)


@dataclass(frozen=True)
class Hyperparams:
    learning_rate: float
    batch_size: int
    epochs: int

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size <= 0 or self.epochs <= 0:
            raise ValidationError("hyperparameters must be positive")

    def within_sweep(self, sweep: Mapping[str, tuple] = DEFAULT_SWEEP) -> bool:
        return (
            self.learning_rate in sweep["learning_rate"]
            and self.batch_size in sweep["batch_size"]
            and self.epochs in sweep["epochs"]
        )

    def to_record(self) -> dict[str, Any]:
        return {"learning_rate": self.learning_rate, "batch_size": self.batch_size, "epochs": self.epochs}

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> "Hyperparams":
        return cls(record["learning_rate"], record["batch_size"], record["epochs"])


class JobStatus(str, enum.Enum):
    QUEUED = "queued"
    RUNNING = "running"
    SUCCEEDED = "succeeded"
    FAILED = "failed"

    @property
    def terminal(self) -> bool:
        return self in (JobStatus.SUCCEEDED, JobStatus.FAILED)


_JOB_RANK = {JobStatus.QUEUED: 0, JobStatus.RUNNING: 1, JobStatus.SUCCEEDED: 2, JobStatus.FAILED: 2}


@dataclass(frozen=True)
class TrainerJob:
    job_id: str
    dataset_ref: str
    hyperparams: Hyperparams
    status: JobStatus
    resulting_backend_ref: str | None = None

    def advanced_to(self, status: JobStatus, backend_ref: str | None = None) -> "TrainerJob":
        # Status may only move forward in queued < running < terminal order.
        if _JOB_RANK[status] < _JOB_RANK[self.status]:
            raise ValidationError(f"job cannot regress from {self.status.value} to {status.value}")
        return replace(self, status=status, resulting_backend_ref=backend_ref or self.resulting_backend_ref)

    def to_record(self) -> dict[str, Any]:
        return {
            "job_id": self.job_id,
            "dataset_ref": self.dataset_ref,
            "hyperparams": self.hyperparams.to_record(),
            "status": self.status.value,
            "resulting_backend_ref": self.resulting_backend_ref,
        }

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> "TrainerJob":
        return cls(
            job_id=record["job_id"],
            dataset_ref=record["dataset_ref"],
            hyperparams=Hyperparams.from_record(record["hyperparams"]),
            status=JobStatus(record["status"]),
            resulting_backend_ref=record.get("resulting_backend_ref"),
        )


@runtime_checkable
class CompletionBackend(Protocol):
    def complete(self, request: CompletionRequest) -> list[str]: ...


@runtime_checkable
class ScoringBackend(Protocol):
    def score(self, request: ScoringRequest) -> ScoringResponse: ...


@runtime_checkable
class TrainerBackend(Protocol):
    def submit_finetune(self, dataset_ref: str, hyperparams: Hyperparams) -> TrainerJob: ...

    def poll(self, job: TrainerJob) -> TrainerJob: ...


@dataclass(frozen=True)
class ScriptRule:
    """Substring predicate on the prompt mapped to a completion pool."""

    contains: str
    completions: tuple[str, ...]

    def __post_init__(self):
        if not self.completions:
            raise ValidationError("a script rule needs at least one completion")


class MockBackend:
    """Deterministic scripted backend for tests and desk-scale runs.

    The first rule whose substring occurs in the prompt supplies the
    completion pool; otherwise ``default_completions``. With a request seed
    the pool is sampled by a fresh seeded RNG (identical across calls);
    without one the pool is cycled in order.
    """

    def __init__(
        self,
        rules: Sequence[ScriptRule] = (),
        default_completions: Sequence[str] = ("pass",),
        scripted_logprobs: Mapping[str, Sequence[float]] | None = None,
        default_token_logprob: float = -1.0,
    ):
        self.rules = tuple(rules)
        self.default_completions = tuple(default_completions)
        self.scripted_logprobs = {k: tuple(v) for k, v in (scripted_logprobs or {}).items()}
        self.default_token_logprob = default_token_logprob

    def _pool(self, prompt: str) -> tuple[str, ...]:
        for rule in self.rules:
            if rule.contains in prompt:
                return rule.completions
        return self.default_completions

    def complete(self, request: CompletionRequest) -> list[str]:
        pool = self._pool(request.prompt)
        if request.seed is not None:
            rng = random.Random(request.seed)
            return [rng.choice(pool) for _ in range(request.num_samples)]
        return [pool[i % len(pool)] for i in range(request.num_samples)]

    def score(self, request: ScoringRequest) -> ScoringResponse:
        scripted = self.scripted_logprobs.get(request.text)
        if scripted is not None:
            return ScoringResponse(tuple(scripted))
        token_count = max(1, len(request.text.split()))
        return ScoringResponse((self.default_token_logprob,) * token_count)


class MockTrainer:
    """Instant trainer: jobs succeed immediately with a scripted result.

    ``graded_results`` maps minimum dataset sizes to backend references; the
    largest threshold not exceeding the dataset's example count wins. This
    lets scaling tests wire "more data, better model" without real training.
    """

    def __init__(self, graded_results: Sequence[tuple[int, str]] = ((0, "mock-finetuned"),), strict_sweep: bool = False):
        if not graded_results:
            raise ValidationError("graded_results must be non-empty")
        self.graded_results = sorted(graded_results)
        self.strict_sweep = strict_sweep
        self._counter = 0
        self._lock = threading.Lock()

    @staticmethod
    def _dataset_size(dataset_ref: str) -> int:
        path = Path(dataset_ref)
        if not path.exists():
            raise ValidationError(f"dataset not found: {dataset_ref}")
        with path.open("r", encoding="utf-8") as fh:
            return sum(1 for line in fh if line.strip())

    def submit_finetune(self, dataset_ref: str, hyperparams: Hyperparams) -> TrainerJob:
        size = self._dataset_size(dataset_ref)
        if size == 0:
            raise ValidationError("cannot fine-tune on an empty dataset")
        if self.strict_sweep and not hyperparams.within_sweep():
            raise ValidationError("hyperparameters outside the configured sweep domain")
        chosen = None
        for threshold, backend_ref in self.graded_results:
            if size >= threshold:
                chosen = backend_ref
        if chosen is None:
            raise ValidationError(f"no graded result for dataset of size {size}")
        with self._lock:
            self._counter += 1
            job_id = f"mock-job-{self._counter}"
        job = TrainerJob(job_id, dataset_ref, hyperparams, JobStatus.QUEUED)
        return job.advanced_to(JobStatus.SUCCEEDED, backend_ref=chosen)

    def poll(self, job: TrainerJob) -> TrainerJob:
        return job


def _redacted(headers: Mapping[str, str]) -> dict[str, str]:
    return {k: ("<redacted>" if k.lower() == "authorization" else v) for k, v in headers.items()}


class HttpBackend:
    """Adapter to the common completion-API shape over HTTP.

    Covers both completion and scoring (scoring uses echo mode with
    zero new tokens, reading per-token log-probabilities). Transient
    transport failures and retryable statuses get bounded exponential
    backoff; anything structurally wrong raises a protocol error.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str = "ILF_API_KEY",
        timeout: float = 60.0,
        max_retries: int = 3,
        backoff_base: float = 0.5,
        max_in_flight: int = 8,
        client: httpx.Client | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self._client = client or httpx.Client(timeout=timeout)
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post(self, path: str, payload: Mapping[str, Any]) -> Any:
        url = f"{self.base_url}{path}"
        headers = self._headers()
        logger.debug("POST %s headers=%s payload=%s", url, _redacted(headers), json.dumps(payload)[:2000])
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(min(self.backoff_base * (2 ** (attempt - 1)), 8.0))
            try:
                with self._slots:
                    response = self._client.post(url, json=payload, headers=headers)
            except httpx.TransportError as exc:
                last_error = exc
                continue
            if response.status_code in RETRYABLE_STATUS:
                last_error = ProtocolError(f"status {response.status_code}: {response.text[:200]}")
                continue
            if response.status_code != 200:
                raise ProtocolError(f"status {response.status_code}: {response.text[:200]}")
            try:
                return response.json()
            except ValueError as exc:
                raise ProtocolError(f"non-JSON response from {url}") from exc
        raise TransportError(f"retries exhausted for {url}: {last_error}")

    def complete(self, request: CompletionRequest) -> list[str]:
        payload: dict[str, Any] = {
            "model": self.model,
            "prompt": request.prompt,
            "n": request.num_samples,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        if request.stop_sequences:
            payload["stop"] = list(request.stop_sequences)
        if request.seed is not None:
            payload["seed"] = request.seed
        body = self._post("/completions", payload)
        try:
            texts = [choice["text"] for choice in body["choices"]]
        except (KeyError, TypeError) as exc:
            raise ProtocolError(f"malformed completion response: {exc}") from exc
        if len(texts) < request.num_samples:
            raise ProtocolError(f"requested {request.num_samples} samples, got {len(texts)}")
        return texts[: request.num_samples]

    def score(self, request: ScoringRequest) -> ScoringResponse:
        payload = {
            "model": self.model,
            "prompt": request.text,
            "max_tokens": 0,
            "echo": True,
            "logprobs": 0,
        }
        body = self._post("/completions", payload)
        try:
            raw = body["choices"][0]["logprobs"]["token_logprobs"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"malformed scoring response: {exc}") from exc
        # The first echoed token has no conditional probability; drop nulls.
        logprobs = tuple(lp for lp in raw if lp is not None)
        if not logprobs:
            raise ProtocolError("scoring response carried no usable log-probs")
        return ScoringResponse(logprobs)


class HttpTrainer:
    """Fine-tuning client for a trainer service with the same error policy."""

    def __init__(self, base_url: str, api_key_env: str = "ILF_API_KEY", timeout: float = 60.0, max_retries: int = 3):
        self._http = HttpBackend(base_url, model="trainer", api_key_env=api_key_env, timeout=timeout, max_retries=max_retries)

    def submit_finetune(self, dataset_ref: str, hyperparams: Hyperparams) -> TrainerJob:
        body = self._http._post("/finetune", {"dataset_ref": dataset_ref, "hyperparams": hyperparams.to_record()})
        try:
            return TrainerJob.from_record(body)
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed trainer response: {exc}") from exc

    def poll(self, job: TrainerJob) -> TrainerJob:
        body = self._http._post("/finetune/poll", {"job_id": job.job_id})
        try:
            polled = TrainerJob.from_record(body)
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed trainer response: {exc}") from exc
        if job.status.terminal and polled.status != job.status:
            raise ProtocolError("trainer mutated a terminal job")
        return polled


@dataclass
class BackendRegistry:
    """Name-to-backend table; pipeline configs refer to backends by name."""

    backends: dict[str, Any] = field(default_factory=dict)

    def register(self, name: str, backend: Any) -> None:
        if not name:
            raise ValidationError("backend name must be non-empty")
        self.backends[name] = backend

    def resolve(self, name: str) -> Any:
        try:
            return self.backends[name]
        except KeyError:
            raise CapabilityError(f"no backend registered under {name!r}") from None

    def complete(self, name: str, request: CompletionRequest) -> list[str]:
        backend = self.resolve(name)
        if not isinstance(backend, CompletionBackend):
            raise CapabilityError(f"backend {name!r} does not support completion")
        completions = backend.complete(request)
        if len(completions) < request.num_samples:
            raise ProtocolError(f"backend {name!r} returned fewer samples than requested")
        return completions

    def score(self, name: str, request: ScoringRequest) -> ScoringResponse:
        backend = self.resolve(name)
        if not isinstance(backend, ScoringBackend):
            raise CapabilityError(f"backend {name!r} does not support scoring")
        return backend.score(request)

    def submit_finetune(self, name: str, dataset_ref: str, hyperparams: Hyperparams) -> TrainerJob:
        backend = self.resolve(name)
        if not isinstance(backend, TrainerBackend):
            raise CapabilityError(f"backend {name!r} does not support fine-tuning")
        return backend.submit_finetune(dataset_ref, hyperparams)

    def poll(self, name: str, job: TrainerJob) -> TrainerJob:
        backend = self.resolve(name)
        if not isinstance(backend, TrainerBackend):
            raise CapabilityError(f"backend {name!r} does not support fine-tuning")
        return backend.poll(job)
