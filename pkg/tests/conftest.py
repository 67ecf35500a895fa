from fractions import Fraction

import pytest

from rigorstoch.wiener import sample_ensemble


@pytest.fixture(scope="session")
def ensemble():
    """4096 stratified level-10 paths, seeds 0..4095."""
    return sample_ensemble(range(4096), 10)


@pytest.fixture(scope="session")
def ou_solution():
    """dX = -X dt + dW, X0 = 1, K = L = 1, 4096 seeds at tol 1/64."""
    from rigorstoch.sde import SdeProblem, picard_solve

    return picard_solve(SdeProblem("-1*x", "1", 1, 1, 1), Fraction(1, 64), range(4096))


@pytest.fixture(scope="session")
def gbm_solution():
    """dX = 0.1 X dt + 0.2 X dW on the box [1/8, 8], X0 = 1, 4096 seeds."""
    from rigorstoch.sde import SdeProblem, picard_solve

    problem = SdeProblem("0.1*x", "0.2*x", Fraction(1, 10), Fraction(1, 5), 1, box=(Fraction(1, 8), 8))
    return picard_solve(problem, Fraction(1, 64), range(4096))


_CRITERIA = {}


@pytest.fixture
def criterion():
    """record(n, ok, detail): stores one acceptance verdict for the summary."""

    def record(n, ok, detail=""):
        _CRITERIA[n] = (bool(ok), detail)
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
