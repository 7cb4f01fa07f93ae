import itertools
import math

import numpy as np
import pytest

from immunize.basis import chebyshev_g
from immunize.curves import YieldCurve
from immunize.errors import ConfigurationError, ContractError
from immunize.fit import (
    SHAPLEY_MAX_I,
    fit_changes,
    fit_from_changes,
    monthly_grid,
    overall_r2,
    r2_by_basis_count,
    shapley_from_changes,
    shapley_r2,
    shapley_weights,
    yield_changes,
)

GRID = monthly_grid(360)


def _random_changes(rng, S=25):
    slope = rng.normal(0, 0.002, (S, 1)) * (GRID / 30 - 0.5)
    hump = rng.normal(0, 0.001, (S, 1)) * np.exp(-((GRID - 5) / 4) ** 2)
    return rng.normal(0, 0.001, (S, 1)) + slope + hump + rng.normal(0, 2e-4, (S, GRID.size))


def _history_from_changes(level_paths):
    return [YieldCurve(GRID, y, date=str(k)) for k, y in enumerate(level_paths)]


def test_in_span_change_is_recovered():
    dY = 0.01 * chebyshev_g(2, 30.0, GRID)[None, :]
    fit = fit_from_changes(dY, 4, T=30.0, grid=GRID)
    np.testing.assert_allclose(fit.gamma[0], [0, 0.01, 0, 0], atol=1e-14)
    assert overall_r2(fit) == pytest.approx(1.0)


def test_zero_change():
    fit = fit_from_changes(np.zeros((3, GRID.size)), 3, grid=GRID)
    np.testing.assert_array_equal(fit.gamma, 0.0)
    assert np.isnan(overall_r2(fit))
    assert np.all(np.isnan(fit.r2_by_date))


def test_residual_orthogonal_and_sum_of_squares():
    rng = np.random.default_rng(0)
    dY = _random_changes(rng)
    fit = fit_from_changes(dY, 5, grid=GRID)
    Gt = np.vstack([chebyshev_g(i, 30.0, GRID) for i in range(1, 6)]).T
    resid = dY - fit.gamma @ Gt.T
    np.testing.assert_allclose(Gt.T @ resid.T, 0.0, atol=1e-12)
    np.testing.assert_allclose(fit.fitted_ss + np.sum(resid ** 2, axis=1), fit.actual_ss, rtol=1e-12)
    np.testing.assert_allclose(fit.residual_ss, np.sum(resid ** 2, axis=1), rtol=1e-8, atol=1e-18)


def test_r2_nondecreasing_in_basis_count():
    rng = np.random.default_rng(1)
    hist = _history_from_changes(0.02 + np.cumsum(_random_changes(rng, 15), axis=0))
    r2 = r2_by_basis_count(hist, 8, d=1)
    assert np.all(np.diff(r2) >= -1e-12)
    assert 0 <= r2[0] and r2[-1] <= 1 + 1e-12


def test_yield_changes_shape_and_guards():
    hist = _history_from_changes(np.full((5, GRID.size), 0.02))
    assert yield_changes(hist, 2, GRID).shape == (3, GRID.size)
    with pytest.raises(ContractError):
        yield_changes(hist, 5, GRID)
    with pytest.raises(ContractError):
        yield_changes(hist, 0, GRID)


def test_fit_changes_dates():
    rng = np.random.default_rng(2)
    hist = _history_from_changes(0.02 + np.cumsum(_random_changes(rng, 6), axis=0))
    fit = fit_changes(hist, 3, d=2)
    assert fit.dates == ["0", "1", "2", "3"]


def test_shapley_weights_sum():
    for I in range(1, 10):
        w = shapley_weights(I)
        assert sum(math.comb(I - 1, k) * w[k] for k in range(I)) == pytest.approx(1.0)


def _brute_shapley(y, X):
    """Shapley values of R^2 from explicit least squares on every coalition."""
    I = X.shape[1]
    tot = y @ y

    def r2(S):
        if not S:
            return 0.0
        beta, *_ = np.linalg.lstsq(X[:, list(S)], y, rcond=None)
        f = X[:, list(S)] @ beta
        return f @ f / tot

    phi = np.zeros(I)
    for i in range(I):
        others = [j for j in range(I) if j != i]
        for k in range(I):
            for S in itertools.combinations(others, k):
                wt = math.factorial(k) * math.factorial(I - k - 1) / math.factorial(I)
                phi[i] += wt * (r2(S + (i,)) - r2(S))
    return phi


def test_shapley_matches_brute_force():
    rng = np.random.default_rng(3)
    dY = _random_changes(rng, 4)
    I = 4
    X = np.vstack([chebyshev_g(i, 30.0, GRID) for i in range(1, I + 1)]).T
    phi = shapley_from_changes(dY, I, grid=GRID)
    for s in range(dY.shape[0]):
        np.testing.assert_allclose(phi[s], _brute_shapley(dY[s], X), atol=1e-12)


def test_shapley_efficiency_and_single_function():
    rng = np.random.default_rng(4)
    dY = _random_changes(rng, 10)
    fit = fit_from_changes(dY, 6, grid=GRID)
    phi = shapley_from_changes(dY, 6, grid=GRID)
    np.testing.assert_allclose(phi.sum(axis=1), fit.r2_by_date, atol=1e-12)
    one = shapley_from_changes(dY, 1, grid=GRID)
    np.testing.assert_allclose(one[:, 0], fit_from_changes(dY, 1, grid=GRID).r2_by_date, rtol=1e-12)


def test_shapley_orthogonal_regressors_get_standalone_r2():
    # on a symmetric grid a constant and a centred linear term are orthogonal
    grid = np.arange(1, 61) / 2.0
    T = grid[-1] + grid[0]
    rng = np.random.default_rng(5)
    dY = rng.normal(size=(3, grid.size))
    phi = shapley_from_changes(dY, 2, T=T, grid=grid)
    single = []
    for i in (1, 2):
        g = chebyshev_g(i, T, grid)
        single.append((dY @ g) ** 2 / (g @ g) / np.sum(dY ** 2, axis=1))
    np.testing.assert_allclose(phi, np.column_stack(single), atol=1e-12)


def test_shapley_size_guard():
    with pytest.raises(ConfigurationError):
        shapley_from_changes(np.ones((1, GRID.size)), SHAPLEY_MAX_I + 1, grid=GRID)


def test_shapley_r2_ignores_zero_change_dates():
    rng = np.random.default_rng(6)
    lv = 0.02 + np.cumsum(_random_changes(rng, 6), axis=0)
    lv = np.vstack([lv[:3], lv[2:3], lv[3:]])  # one repeated date gives a zero change
    hist = _history_from_changes(lv)
    out = shapley_r2(hist, 3, d=1)
    assert np.all(np.isfinite(out))
