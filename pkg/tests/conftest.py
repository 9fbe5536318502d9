import numpy as np
import pytest

from tripletdiff.synthetic import TaskSpec, generate_dataset
from tripletdiff.taxonomy import Taxonomy


@pytest.fixture
def toy():
    return Taxonomy(2, 2, 2, ((0, 0, 0), (0, 1, 1), (1, 1, 0)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_dataset():
    return generate_dataset(TaskSpec(video_length=40, video_count=5, seed=3))


_CRITERIA: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def criterion(request):
    """Record a named pass/fail verdict with the measured values for the terminal summary."""
    name = request.node.name

    def record(ok: bool, detail: str):
        _CRITERIA[name] = (bool(ok), detail)
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_CRITERIA):
        ok, detail = _CRITERIA[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
