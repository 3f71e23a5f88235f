import time

import numpy as np
import pytest

from degbill import geometry

E_HALF = 0.5
RUNTIME_BUDGET = 600.0

# (number, title, passed, detail) tuples filled by the acceptance tests
_ACCEPTANCE: list = []
_CLOCK: dict = {}


def pytest_sessionstart(session):
    _CLOCK["start"] = time.perf_counter()


def _elapsed() -> float:
    return time.perf_counter() - _CLOCK.get("start", time.perf_counter())


def pytest_sessionfinish(session, exitstatus):
    # the suite itself is timed: overrunning the budget fails the run
    if _ACCEPTANCE and _elapsed() > RUNTIME_BUDGET and session.exitstatus == 0:
        session.exitstatus = 1


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    rows = sorted(_ACCEPTANCE, key=lambda r: r[0])
    elapsed = _elapsed()
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number, title, passed, detail in rows:
        if number == 12:
            ok = passed and elapsed <= RUNTIME_BUDGET
            detail = f"{detail}; suite runtime {elapsed:.1f} s (budget {RUNTIME_BUDGET:.0f} s)"
            passed = ok
        flag = "PASS" if passed else "FAIL"
        tr.write_line(f"[{flag}] criterion {number:2d}: {title} -- {detail}")


@pytest.fixture
def criterion():
    """Record one acceptance line; returns the pass flag for asserting."""
    def record(number: int, title: str, passed: bool, detail: str = "") -> bool:
        _ACCEPTANCE.append((number, title, bool(passed), detail))
        return bool(passed)
    return record


@pytest.fixture(scope="session")
def triangle():
    return geometry.n_centers([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3.0) / 2.0]])


@pytest.fixture(scope="session")
def centers3d():
    return geometry.n_centers([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.3]])


@pytest.fixture(scope="session")
def skew_wires():
    return geometry.wires([([0, 0, 0], [1, 0, 0]), ([0, 0, 1], [0, 1, 0])])


@pytest.fixture(scope="session")
def parallel_wires():
    return geometry.wires([([0, 0, 0], [1, 0, 0]), ([0, 1, 0], [1, 0, 0])])


@pytest.fixture(scope="session")
def rc3bp():
    return geometry.rc_restricted([[1.0, 0.0, 0.0], [-0.5, 0.8, 0.0]], energy=-1.0)


@pytest.fixture(scope="session")
def free_center():
    return geometry.n_centers([[0.0, 0.0]])
