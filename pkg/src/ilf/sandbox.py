"""Isolated execution of candidate programs against unit-test suites.

Each test statement runs as one child process built from the concatenation
of setup code, the candidate program, and the test. Runs get a fresh scratch
directory, a minimal environment, and POSIX resource limits (output size via
RLIMIT_FSIZE, CPU time as a backstop to the wall-clock timeout, optionally
address space). The harness never raises on candidate misbehavior: every
candidate failure maps to a failure kind on the outcome. ``harness_error``
is reserved for infrastructure faults such as a missing interpreter.

Security contract (best effort, documented): candidates run as the same OS
user, so this is isolation against accidents and resource exhaustion, not a
hard security boundary. Network access is blocked for Python interpreters by
injecting a ``sitecustomize`` module that disables socket creation; writes
outside the scratch directory are discouraged by cwd/HOME relocation and by
the file-size limit, not prevented.
"""

from __future__ import annotations

import enum
import os
import signal
import subprocess
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from shutil import rmtree
from typing import Any, Callable, Mapping, Sequence

from .errors import IlfError
from .tasks import ProgramSample, RenderedTask

__all__ = [
    "FailureKind",
    "TestResult",
    "EvalOutcome",
    "SandboxConfig",
    "eval_program",
    "eval_batch",
    "run_suite",
]

# Wall-clock slack allowed for process supervision on top of the timeout.
SUPERVISION_OVERHEAD = 2.0

_NETWORK_GUARD = """\
import socket

def _blocked(*args, **kwargs):
    raise OSError("network access is disabled in this sandbox")

socket.socket = _blocked
socket.create_connection = _blocked
socket.socketpair = _blocked
"""


class FailureKind(str, enum.Enum):
    ASSERTION_FAILURE = "assertion_failure"
    RUNTIME_ERROR = "runtime_error"
    TIMEOUT = "timeout"
    RESOURCE_LIMIT = "resource_limit"
    HARNESS_ERROR = "harness_error"


@dataclass(frozen=True)
class TestResult:
    test_index: int
    passed: bool
    message: str = ""

    def to_record(self) -> dict[str, Any]:
        return {"test_index": self.test_index, "passed": self.passed, "message": self.message}

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> "TestResult":
        return cls(record["test_index"], record["passed"], record.get("message", ""))


@dataclass(frozen=True)
class EvalOutcome:
    """The binary verdict for one program on one task, with per-test detail.

    ``passed`` is true iff every executed test passed and no failure kind was
    recorded; it is the filter bit the pipeline uses on both the incorrect
    pool (keep failures) and the refinement pool (keep passes).
    """

    passed: bool
    failure_kind: FailureKind | None
    duration: float
    per_test: tuple[TestResult, ...]

    def __post_init__(self):
        consistent = self.passed == (
            self.failure_kind is None and bool(self.per_test) and all(t.passed for t in self.per_test)
        )
        if not consistent:
            raise IlfError("inconsistent EvalOutcome: passed flag disagrees with per-test results")

    def to_record(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "failure_kind": self.failure_kind.value if self.failure_kind else None,
            "duration": round(self.duration, 6),
            "per_test": [t.to_record() for t in self.per_test],
        }

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> "EvalOutcome":
        kind = record.get("failure_kind")
        return cls(
            passed=record["passed"],
            failure_kind=FailureKind(kind) if kind else None,
            duration=record["duration"],
            per_test=tuple(TestResult.from_record(t) for t in record.get("per_test", [])),
        )


@dataclass(frozen=True)
class SandboxConfig:
    """Execution limits and interpreter invocation.

    ``interpreter_command`` is an argv template; the ``{script}`` placeholder
    is replaced with the path of the generated script, so the harness is
    agnostic to the evaluated language. ``wall_clock_timeout`` is the budget
    for one whole evaluation (all test statements together), which keeps any
    single evaluation bounded by timeout plus supervision overhead; size it
    to cover the full suite of a legitimate program.
    """

    interpreter_command: tuple[str, ...] = (sys.executable, "{script}")
    wall_clock_timeout: float = 10.0
    max_output_bytes: int = 65536
    memory_limit_bytes: int | None = 2 << 30
    block_network: bool = True
    scratch_root: str | None = None

    def __post_init__(self):
        if self.wall_clock_timeout <= 0:
            raise IlfError("wall_clock_timeout must be positive")
        if self.max_output_bytes <= 0:
            raise IlfError("max_output_bytes must be positive")
        if not any("{script}" in part for part in self.interpreter_command):
            raise IlfError("interpreter_command must contain a {script} placeholder")


def _limit_setter(config: SandboxConfig, cpu_seconds: int) -> Callable[[], None]:
    import resource

    def apply():
        resource.setrlimit(resource.RLIMIT_FSIZE, (config.max_output_bytes, config.max_output_bytes))
        resource.setrlimit(resource.RLIMIT_CPU, (cpu_seconds, cpu_seconds + 1))
        resource.setrlimit(resource.RLIMIT_CORE, (0, 0))
        if config.memory_limit_bytes is not None:
            resource.setrlimit(resource.RLIMIT_AS, (config.memory_limit_bytes, config.memory_limit_bytes))

    return apply


def _classify(returncode: int, stderr_tail: str) -> tuple[FailureKind | None, str]:
    message = ""
    for line in reversed(stderr_tail.splitlines()):
        if line.strip():
            message = line.strip()[:500]
            break
    if returncode == 0:
        return None, message
    if returncode == -signal.SIGXFSZ:
        return FailureKind.RESOURCE_LIMIT, message or "output limit exceeded"
    if returncode == -signal.SIGKILL:
        return FailureKind.RESOURCE_LIMIT, message or "killed (resource limit)"
    if returncode == -signal.SIGXCPU:
        return FailureKind.TIMEOUT, message or "cpu time limit exceeded"
    if "MemoryError" in stderr_tail:
        return FailureKind.RESOURCE_LIMIT, message
    if "AssertionError" in stderr_tail:
        return FailureKind.ASSERTION_FAILURE, message
    return FailureKind.RUNTIME_ERROR, message or f"exit status {returncode}"


def _run_script(script: str, config: SandboxConfig, budget: float) -> tuple[FailureKind | None, str]:
    """Run one generated script in a fresh scratch directory.

    Returns (failure_kind, message); failure_kind None means the script
    exited cleanly.
    """
    try:
        scratch = tempfile.mkdtemp(prefix="ilf-sandbox-", dir=config.scratch_root)
    except OSError as exc:
        return FailureKind.HARNESS_ERROR, f"cannot create scratch directory: {exc}"

    proc = None
    try:
        script_path = os.path.join(scratch, "candidate.py")
        with open(script_path, "w", encoding="utf-8") as fh:
            fh.write(script)
        env = {
            "PATH": os.environ.get("PATH", "/usr/bin:/bin"),
            "HOME": scratch,
            "TMPDIR": scratch,
            "PYTHONDONTWRITEBYTECODE": "1",
            "PYTHONHASHSEED": "0",
        }
        if config.block_network:
            with open(os.path.join(scratch, "sitecustomize.py"), "w", encoding="utf-8") as fh:
                fh.write(_NETWORK_GUARD)
            env["PYTHONPATH"] = scratch
        argv = [part.replace("{script}", script_path) for part in config.interpreter_command]
        out_file = open(os.path.join(scratch, "__stdout"), "w+b")
        err_file = open(os.path.join(scratch, "__stderr"), "w+b")
        try:
            try:
                proc = subprocess.Popen(
                    argv,
                    cwd=scratch,
                    env=env,
                    stdin=subprocess.DEVNULL,
                    stdout=out_file,
                    stderr=err_file,
                    start_new_session=True,
                    preexec_fn=_limit_setter(config, max(1, int(budget) + 1)),
                )
            except (OSError, ValueError) as exc:
                return FailureKind.HARNESS_ERROR, f"cannot spawn interpreter: {exc}"
            try:
                proc.wait(timeout=budget)
            except subprocess.TimeoutExpired:
                _kill_group(proc)
                return FailureKind.TIMEOUT, f"timed out after {budget:.1f}s"
            err_file.seek(0)
            tail = err_file.read(config.max_output_bytes).decode("utf-8", errors="replace")
            return _classify(proc.returncode, tail)
        finally:
            out_file.close()
            err_file.close()
    finally:
        # The candidate may have deleted or repopulated the scratch dir.
        rmtree(scratch, ignore_errors=True)


def _kill_group(proc: subprocess.Popen) -> None:
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        pass
    try:
        proc.wait(timeout=SUPERVISION_OVERHEAD)
    except subprocess.TimeoutExpired:
        pass


def _build_script(program_text: str, test: str, setup_code: str | None) -> str:
    parts = []
    if setup_code:
        parts.append(setup_code.rstrip("\n"))
    parts.append(program_text.rstrip("\n"))
    parts.append(test.rstrip("\n"))
    return "\n\n".join(parts) + "\n"


def run_suite(program_text: str, task: RenderedTask, config: SandboxConfig = SandboxConfig()) -> EvalOutcome:
    """Evaluate raw program text against a task's evaluation suite.

    Tests run in order, one process each, sharing the wall-clock budget.
    Assertion and runtime failures do not stop the suite (each remaining
    test still gets a diagnostic); timeouts and resource exhaustion do.
    """
    if not program_text:
        raise IlfError("program text must be non-empty")
    start = time.monotonic()
    results: list[TestResult] = []
    failure: FailureKind | None = None
    for index, test in enumerate(task.evaluation_tests):
        remaining = config.wall_clock_timeout - (time.monotonic() - start)
        if remaining <= 0:
            failure = failure or FailureKind.TIMEOUT
            break
        script = _build_script(program_text, test, task.setup_code)
        kind, message = _run_script(script, config, budget=remaining)
        results.append(TestResult(test_index=index, passed=kind is None, message=message))
        if kind is not None and failure is None:
            failure = kind
        if kind in (FailureKind.TIMEOUT, FailureKind.RESOURCE_LIMIT, FailureKind.HARNESS_ERROR):
            break
    duration = time.monotonic() - start
    passed = failure is None and bool(results) and all(r.passed for r in results)
    return EvalOutcome(passed=passed, failure_kind=failure, duration=duration, per_test=tuple(results))


def eval_program(program: ProgramSample, task: RenderedTask, config: SandboxConfig = SandboxConfig()) -> EvalOutcome:
    """Evaluate one candidate program sample. Never raises on candidate
    misbehavior; infrastructure faults surface as ``harness_error``."""
    return run_suite(program.program_text, task, config)


def eval_batch(
    programs: Sequence[ProgramSample],
    task_lookup: Mapping[int, RenderedTask],
    config: SandboxConfig = SandboxConfig(),
    parallelism: int = 1,
) -> list[EvalOutcome]:
    """Evaluate many samples with a bounded worker pool.

    The outcome list matches the input order, and for deterministic programs
    equals a sequential run of :func:`eval_program`.
    """
    if parallelism < 1:
        raise IlfError("parallelism must be >= 1")
    if not programs:
        return []
    if parallelism == 1:
        return [eval_program(p, task_lookup[p.task_id], config) for p in programs]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(lambda p: eval_program(p, task_lookup[p.task_id], config), programs))
