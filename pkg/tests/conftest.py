import sys
from pathlib import Path

import pytest

# Make the synthetic-corpus helper importable from any test module.
sys.path.insert(0, str(Path(__file__).parent))

from synthetic import build_registry, make_corpus, small_config  # noqa: E402


@pytest.fixture
def corpus():
    return make_corpus()


@pytest.fixture
def registry(corpus):
    return build_registry(corpus)


@pytest.fixture
def config():
    return small_config()


@pytest.fixture
def run_dir(tmp_path):
    return tmp_path / "run"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Replay the acceptance-criterion verdicts after the test summary.

    Output inside tests is captured, so the gate results are echoed here
    where they stay visible on fully green runs too.
    """
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for name, verdict in results:
        terminalreporter.write_line(f"{verdict:<4}  {name}")
