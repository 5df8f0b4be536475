"""Shared fixtures and the acceptance summary printed after the run."""

import pytest

from mfglab import CouplingSpec, MFGProblem, SolverConfig, build_grid, mode

_RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_RESULTS] = {}


@pytest.fixture
def criterion(request):
    """``criterion(number, passed, detail)`` records one acceptance line."""
    store = request.config.stash[_RESULTS]

    def record(number: int, passed: bool, detail: str) -> bool:
        store[number] = (bool(passed), detail)
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter, config):
    store = config.stash.get(_RESULTS, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for number in range(1, 13):
        if number in store:
            passed, detail = store[number]
            terminalreporter.write_line(
                f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
            )
        else:
            terminalreporter.write_line(f"criterion {number:2d}: FAIL  (not evaluated)")


def make_p1(n: int = 128) -> MFGProblem:
    """Monotone benchmark: F = m + 0.5 sin(2 pi x), quadratic H, kappa = 1."""
    return MFGProblem(build_grid(n), 1.0,
                      coupling=CouplingSpec(f0=mode("sin", 1, 0.5), c1=1.0))


def make_p0(n: int = 64, **coupling) -> MFGProblem:
    return MFGProblem(build_grid(n), 1.0, coupling=CouplingSpec(**coupling))


@pytest.fixture(scope="session")
def cfg():
    return SolverConfig()


@pytest.fixture(scope="session")
def p1_small():
    return make_p1(32)
