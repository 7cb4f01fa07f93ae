"""Goodness of fit of basis approximations to yield-curve changes.

For each date ``s`` the change ``y[s+d](t_n) - y[s](t_n)`` on the monthly
grid ``t_n = n/12`` is regressed (no intercept) on ``g_1..g_I``.  The overall
fit pools fitted and actual sums of squares over dates; the Shapley
decomposition splits each date's R^2 among the basis functions using zero as
the benchmark.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .basis import build_basis
from .curves import cumulative_discount
from .errors import ConfigurationError, ContractError, SolverError

SHAPLEY_MAX_I = 12


def monthly_grid(N=360):
    return np.arange(1, N + 1) / 12.0


def yield_changes(history, d, grid):
    """Matrix ``(S - d, N)`` of yield changes over ``d`` observations."""
    if d < 1:
        raise ContractError("d must be a positive integer")
    if len(history) <= d:
        raise ContractError(f"history of {len(history)} rows is too short for d={d}")
    Y = np.vstack([cumulative_discount(c, grid) for c in history]) / grid
    return Y[d:] - Y[:-d]


@dataclass
class FitResult:
    """Per-date OLS fits for one horizon ``d``.

    Attributes
    ----------
    gamma : (S, I) coefficients
    fitted_ss, actual_ss : (S,) sums of squares per date
    """

    d: int
    I: int
    gamma: np.ndarray
    fitted_ss: np.ndarray
    actual_ss: np.ndarray
    dates: list

    @property
    def residual_ss(self):
        return self.actual_ss - self.fitted_ss

    @property
    def r2_by_date(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.actual_ss > 0, self.fitted_ss / self.actual_ss, np.nan)


def _design(I, T, grid):
    basis = build_basis("chebyshev", I, T, grid)
    Q, R = np.linalg.qr(basis.G.T)
    d = np.abs(np.diag(R))
    if d.min() <= 1e-12 * d.max():
        raise SolverError("design matrix is rank deficient")
    return Q, R


def fit_from_changes(dY, I, T=None, grid=None, d=1, dates=None):
    """OLS of each row of ``dY`` on the first ``I`` Chebyshev loadings."""
    grid = monthly_grid(dY.shape[1]) if grid is None else np.asarray(grid, dtype=float)
    T = float(grid[-1]) if T is None else float(T)
    Q, R = _design(I, T, grid)
    C = dY @ Q  # (S, I)
    gamma = np.linalg.solve(R, C.T).T
    return FitResult(
        d=d, I=I, gamma=gamma,
        fitted_ss=np.sum(C ** 2, axis=1),
        actual_ss=np.sum(dY ** 2, axis=1),
        dates=list(range(dY.shape[0])) if dates is None else list(dates),
    )


def fit_changes(history, I, d, N=360, T=None):
    """Fit yield changes over ``d`` rows with ``I`` basis functions.

    ``T`` defaults to the last grid term ``N/12``.
    """
    grid = monthly_grid(N)
    dY = yield_changes(history, d, grid)
    dates = [c.date for c in history[:-d]]
    return fit_from_changes(dY, I, T, grid, d, dates)


def overall_r2(fit):
    """``sum fitted^2 / sum actual^2`` pooled over dates and nodes; NaN if undefined."""
    den = float(np.sum(fit.actual_ss))
    if den == 0.0:
        return float("nan")
    return float(np.sum(fit.fitted_ss) / den)


def r2_by_basis_count(history, I_max, d, N=360, T=None):
    """Overall R^2 for ``I = 1..I_max`` nested bases."""
    grid = monthly_grid(N)
    dY = yield_changes(history, d, grid)
    return np.array([overall_r2(fit_from_changes(dY, I, T, grid, d)) for I in range(1, I_max + 1)])


def shapley_weights(I):
    """``w[k] = k! (I - k - 1)! / I!`` for coalitions of size ``k``."""
    return np.array([math.factorial(k) * math.factorial(I - k - 1) / math.factorial(I) for k in range(I)])


def shapley_from_changes(dY, I, T=None, grid=None):
    """Per-date Shapley decomposition of R^2 with a zero benchmark.

    Every subset's R^2 is computed in the ``I``-dimensional coordinates of the
    full design: with ``G' = Q R``, the fit on subset ``S`` is the projection
    of ``Q' y`` onto the columns ``R[:, S]``.

    Returns
    -------
    ndarray, shape (S, I)
        Rows sum to the full-model R^2.  Dates with zero change are NaN.
    """
    if I > SHAPLEY_MAX_I:
        raise ConfigurationError(f"Shapley enumeration needs I <= {SHAPLEY_MAX_I}, got {I}")
    grid = monthly_grid(dY.shape[1]) if grid is None else np.asarray(grid, dtype=float)
    T = float(grid[-1]) if T is None else float(T)
    Q, R = _design(I, T, grid)
    C = (dY @ Q).T  # (I, S)
    tot = np.sum(dY ** 2, axis=1)
    valid = tot > 0
    inv_tot = np.where(valid, 1.0 / np.where(valid, tot, 1.0), np.nan)
    w = shapley_weights(I)
    phi = np.zeros((I, dY.shape[0]))
    for k in range(1, I + 1):
        for S in itertools.combinations(range(I), k):
            Qs, _ = np.linalg.qr(R[:, S])
            r2 = np.sum((Qs.T @ C) ** 2, axis=0) * inv_tot
            inside = np.zeros(I, dtype=bool)
            inside[list(S)] = True
            # i in S gains r2 as the marginal of S\{i}; i outside loses it
            phi[inside] += w[k - 1] * r2
            if k < I:
                phi[~inside] -= w[k] * r2
    return phi.T


def shapley_r2(history, I, d, N=360, T=None):
    """Shapley R^2 per basis function averaged over dates (zero-change dates ignored)."""
    grid = monthly_grid(N)
    phi = shapley_from_changes(yield_changes(history, d, grid), I, T, grid)
    return np.nanmean(phi, axis=0)
