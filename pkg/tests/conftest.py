import numpy as np
import pytest

from immunize.basis import build_basis
from immunize.curves import YieldCurve, standard_liability, union_grid, zero_coupon_bonds
from immunize.sensitivity import build_system, system_from_arrays

ACCEPTANCE_RESULTS = {}


def record_acceptance(number, title, passed, detail=""):
    ACCEPTANCE_RESULTS[number] = (title, passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        title, passed, detail = ACCEPTANCE_RESULTS[k]
        status = {True: "PASS", False: "FAIL", None: "SKIP"}[passed]
        terminalreporter.write_line(f"[{status}] {k:>2}. {title}: {detail}")


def random_instance(rng, J, I, N, T=None, rate=0.03):
    """Random sensitivity system on ``N`` dates with ``J`` nonnegative bonds."""
    T = float(rng.uniform(10, 40)) if T is None else T
    dates = np.sort(rng.choice(np.arange(1, 4 * int(T) + 1), size=N, replace=False)) / 4.0
    p = np.exp(-rate * dates * rng.uniform(0.5, 1.5))
    f = rng.uniform(0.0, 1.0, N)
    f[rng.integers(N)] += 0.5
    F = rng.uniform(0.0, 1.0, (J, N)) * (rng.uniform(size=(J, N)) < 0.7)
    F[np.arange(J), rng.choice(N, J, replace=False)] += 1.0
    basis = build_basis("chebyshev", I, float(dates[-1]), dates)
    return system_from_arrays(basis.H, basis.G, p, f, F, dates, T=basis.T)


def sloped_curve():
    terms = np.array([0.25, 1, 2, 5, 10, 20, 30])
    ys = np.array([0.015, 0.018, 0.021, 0.026, 0.030, 0.033, 0.034])
    return YieldCurve(terms, ys, date="2016-12-02")


@pytest.fixture
def curve():
    return sloped_curve()


@pytest.fixture
def paper_setup():
    """fullHorizon liability, five zeros, Chebyshev I=10, T=50 on a sloped curve."""
    liab = standard_liability("fullHorizon")
    bonds = zero_coupon_bonds([1, 2, 5, 10, 30])
    grid = union_grid([liab, *bonds])
    basis = build_basis("chebyshev", 10, 50.0, grid)
    return sloped_curve(), liab, bonds, basis, build_system(sloped_curve(), liab, bonds, basis)
