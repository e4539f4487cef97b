"""Sandboxed evaluation: verdicts, limits, isolation, batch semantics."""

import sys
import time

import pytest

from ilf.errors import IlfError
from ilf.sandbox import (
    SUPERVISION_OVERHEAD,
    EvalOutcome,
    FailureKind,
    SandboxConfig,
    TestResult as SandboxTestResult,
    eval_batch,
    eval_program,
    run_suite,
)
from ilf.tasks import Origin, ProgramSample, Task, render_task

FAST = SandboxConfig(wall_clock_timeout=20.0, memory_limit_bytes=None)
SHORT = SandboxConfig(wall_clock_timeout=2.0, memory_limit_bytes=None)


def rendered(*tests, setup=None, tid=900):
    """Build a task whose evaluation suite is exactly ``tests``.

    Multi-test tasks hold out everything after the first test, so a sentinel
    embedded test is prepended when more than one evaluation test is wanted.
    """
    suite = ("assert True",) + tests if len(tests) > 1 else tests
    task = Task(id=tid, description="sandbox fixture", tests=suite, setup_code=setup)
    out = render_task(task)
    assert out.evaluation_tests == tests
    return out


def sample(text, tid=900, index=0):
    return ProgramSample(task_id=tid, program_text=text, origin=Origin.BASE_MODEL, temperature=0.0, index=index)


class TestVerdicts:
    def test_correct_program_passes(self):
        task = rendered("assert add(1, 2) == 3", "assert add(0, 0) == 0")
        outcome = run_suite("def add(a, b):\n    return a + b", task, FAST)
        assert outcome.passed
        assert outcome.failure_kind is None
        assert [t.passed for t in outcome.per_test] == [True, True]

    def test_wrong_answer_is_assertion_failure(self):
        task = rendered("assert add(1, 2) == 3")
        outcome = run_suite("def add(a, b):\n    return a - b", task, FAST)
        assert not outcome.passed
        assert outcome.failure_kind == FailureKind.ASSERTION_FAILURE

    def test_exception_is_runtime_error(self):
        task = rendered("assert f() == 1")
        outcome = run_suite("def f():\n    return 1 / 0", task, FAST)
        assert outcome.failure_kind == FailureKind.RUNTIME_ERROR
        assert not outcome.passed

    def test_syntax_error_is_runtime_error(self):
        task = rendered("assert f() == 1")
        outcome = run_suite("def f(:\n    pass", task, FAST)
        assert outcome.failure_kind == FailureKind.RUNTIME_ERROR

    def test_infinite_loop_times_out(self):
        task = rendered("assert f() == 1")
        outcome = run_suite("def f():\n    while True:\n        pass\nf()", task, SHORT)
        assert not outcome.passed
        assert outcome.failure_kind == FailureKind.TIMEOUT
        assert outcome.duration >= SHORT.wall_clock_timeout - 0.05
        assert outcome.duration <= SHORT.wall_clock_timeout + SUPERVISION_OVERHEAD

    def test_failure_message_carries_diagnostic(self):
        task = rendered("assert f() == 1")
        outcome = run_suite("def f():\n    raise ValueError('boom')", task, FAST)
        assert "ValueError" in outcome.per_test[0].message

    def test_assertion_failures_do_not_stop_the_suite(self):
        task = rendered("assert f() == 99", "assert f() == 1")
        outcome = run_suite("def f():\n    return 1", task, FAST)
        assert [t.passed for t in outcome.per_test] == [False, True]
        assert outcome.failure_kind == FailureKind.ASSERTION_FAILURE

    def test_empty_program_rejected(self):
        with pytest.raises(IlfError):
            run_suite("", rendered("assert True"), FAST)

    def test_setup_code_runs_before_program(self):
        task = rendered("assert f() == 7", setup="BASE = 7")
        outcome = run_suite("def f():\n    return BASE", task, FAST)
        assert outcome.passed

    def test_heldout_tests_drive_the_verdict(self):
        # embedded test would pass; a held-out test must catch the bug
        task = render_task(
            Task(id=901, description="holdout fixture", tests=("assert f(0) == 0", "assert f(2) == 4"))
        )
        assert task.evaluation_tests == ("assert f(2) == 4",)
        outcome = run_suite("def f(x):\n    return x", task, FAST)
        assert not outcome.passed


class TestIsolation:
    def test_output_flood_hits_resource_limit(self):
        task = rendered("assert True")
        program = "import sys\nwhile True:\n    sys.stdout.write('x' * 8192)\n    sys.stdout.flush()"
        outcome = run_suite(program, task, SHORT)
        assert not outcome.passed
        assert outcome.failure_kind in (FailureKind.RESOURCE_LIMIT, FailureKind.RUNTIME_ERROR)
        assert outcome.duration <= SHORT.wall_clock_timeout + SUPERVISION_OVERHEAD

    def test_network_access_blocked(self):
        task = rendered("assert True")
        program = "import socket\nsocket.socket(socket.AF_INET, socket.SOCK_STREAM)"
        outcome = run_suite(program, task, FAST)
        assert not outcome.passed
        assert outcome.failure_kind == FailureKind.RUNTIME_ERROR

    def test_scratch_self_destruction_is_contained(self):
        # deleting its own scratch dir must not take down the harness
        task = rendered("assert True")
        program = "import os, shutil\nshutil.rmtree(os.getcwd(), ignore_errors=True)"
        outcome = run_suite(program, task, FAST)
        assert outcome.failure_kind != FailureKind.HARNESS_ERROR

    def test_runs_do_not_share_state_through_files(self):
        task_w = rendered("assert True")
        run_suite("open('flag.txt', 'w').write('x')", task_w, FAST)
        task_r = rendered("assert True")
        outcome = run_suite(
            "import os\nassert not os.path.exists('flag.txt')", task_r, FAST
        )
        assert outcome.passed

    def test_missing_interpreter_is_harness_error(self):
        config = SandboxConfig(
            interpreter_command=("/no/such/interpreter", "{script}"),
            wall_clock_timeout=5.0,
        )
        outcome = run_suite("pass", rendered("assert True"), config)
        assert outcome.failure_kind == FailureKind.HARNESS_ERROR
        assert not outcome.passed


class TestConfig:
    def test_defaults_are_sane(self):
        config = SandboxConfig()
        assert config.wall_clock_timeout == 10.0
        assert config.interpreter_command[0] == sys.executable

    def test_requires_script_placeholder(self):
        with pytest.raises(IlfError):
            SandboxConfig(interpreter_command=("python3",))

    def test_rejects_non_positive_limits(self):
        with pytest.raises(IlfError):
            SandboxConfig(wall_clock_timeout=0)
        with pytest.raises(IlfError):
            SandboxConfig(max_output_bytes=0)


class TestOutcomeModel:
    def test_consistency_enforced(self):
        with pytest.raises(IlfError):
            EvalOutcome(passed=True, failure_kind=FailureKind.TIMEOUT, duration=0.1, per_test=())
        with pytest.raises(IlfError):
            EvalOutcome(passed=True, failure_kind=None, duration=0.1, per_test=())
        with pytest.raises(IlfError):
            EvalOutcome(
                passed=False,
                failure_kind=None,
                duration=0.1,
                per_test=(SandboxTestResult(0, True),),
            )

    def test_record_round_trip(self):
        outcome = EvalOutcome(
            passed=False,
            failure_kind=FailureKind.TIMEOUT,
            duration=1.25,
            per_test=(SandboxTestResult(0, False, "timed out"),),
        )
        again = EvalOutcome.from_record(outcome.to_record())
        assert again.failure_kind == FailureKind.TIMEOUT
        assert again.per_test == outcome.per_test


class TestBatch:
    def test_order_matches_input(self):
        task = rendered("assert f() == 1")
        lookup = {900: task}
        programs = [
            sample("def f():\n    return 1", index=0),
            sample("def f():\n    return 2", index=1),
            sample("def f():\n    return 1", index=2),
        ]
        outcomes = eval_batch(programs, lookup, FAST, parallelism=3)
        assert [o.passed for o in outcomes] == [True, False, True]

    def test_parallel_equals_sequential(self):
        task = rendered("assert f() == 1")
        lookup = {900: task}
        programs = [sample(f"def f():\n    return {i}", index=i) for i in range(4)]
        seq = eval_batch(programs, lookup, FAST, parallelism=1)
        par = eval_batch(programs, lookup, FAST, parallelism=4)
        assert [o.passed for o in seq] == [o.passed for o in par]
        assert [o.failure_kind for o in seq] == [o.failure_kind for o in par]

    def test_empty_batch(self):
        assert eval_batch([], {}, FAST) == []

    def test_parallelism_must_be_positive(self):
        with pytest.raises(IlfError):
            eval_batch([], {}, FAST, parallelism=0)

    def test_eval_program_matches_run_suite(self):
        task = rendered("assert f() == 1")
        program = sample("def f():\n    return 1")
        assert eval_program(program, task, FAST).passed
