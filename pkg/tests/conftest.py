import numpy as np
import pytest

from skewperiodic.systems import BranchData, SystemSpec, TailModel, validate

ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def random_finite_system(rng: np.random.Generator, n_max: int = 7, m_max: int = 2) -> SystemSpec:
    """Finite full-branch system with random lengths and steps satisfying the standing rules."""
    while True:
        n = int(rng.integers(2, n_max + 1))
        lengths = rng.dirichlet(np.ones(n)) * rng.uniform(0.6, 1.0)
        psi = rng.integers(-1, 4, size=n)
        psi[0] = -1
        psi[-1] = max(psi[-1], 1)
        M = int(rng.integers(0, m_max + 1))
        br = tuple(
            BranchData(k, float(np.log(lengths[k])), float(np.log(lengths[k])), int(psi[k]),
                       int(psi[k] + rng.integers(0, M + 1)))
            for k in range(n)
        )
        try:
            return validate(SystemSpec("random", br, TailModel("none"), M))
        except ValueError:
            continue


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
