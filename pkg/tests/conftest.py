import numpy as np
import pytest

from bdsoc import TimeGrid, build_environment

ACCEPTANCE = {}


def record(criterion: int, passed: bool, detail: str):
    """Store one acceptance line; the terminal summary prints them in order."""
    ACCEPTANCE[criterion] = (bool(passed), detail)
    print(f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {k}: {detail}")


@pytest.fixture(scope="session")
def grid50():
    return TimeGrid(0.0, 1.0, 50)


@pytest.fixture(scope="session")
def env_small(grid50):
    return build_environment(grid50, 2000, (1, 1), 7, 11)


@pytest.fixture(scope="session")
def env_large(grid50):
    return build_environment(grid50, 10000, (1, 1), 7, 11)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
