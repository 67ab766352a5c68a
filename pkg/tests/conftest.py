import math

import pytest

from sphectra.eigensolve import SolverSettings

OCTANT = (0.5 * math.pi, 0.5 * math.pi)

_RESULTS = []


@pytest.fixture
def record():
    """Register a criterion outcome for the end-of-run summary."""

    def _record(name, ok, detail=""):
        _RESULTS.append((name, bool(ok), detail))
        return ok

    return _record


@pytest.fixture(scope="session")
def coarse():
    return SolverSettings(n=16, k=4)


@pytest.fixture(scope="session")
def medium():
    return SolverSettings(n=32, k=4)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
