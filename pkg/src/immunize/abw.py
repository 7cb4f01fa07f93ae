"""Regime-switching no-arbitrage term structure model (Ang, Bekaert and Wei).

Factors ``X = (q, f, pi)`` follow the regime-dependent VAR

    X[t+1] = mu(s[t+1]) + Phi X[t] + Sigma(s[t+1]) eps[t+1]

with a four-state Markov regime ``s = (s_f, s_pi)``.  Nominal zero-coupon
prices are ``P_n(i, X) = exp(A_n(i) + B_n' X)`` with ``n`` in quarters.
"""

from __future__ import annotations

import configparser
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .curves import YieldCurve
from .errors import ParameterError

# regime k -> (s_f, s_pi), zero based
REGIME_MAP = ((0, 0), (0, 1), (1, 0), (1, 1))
QUARTER = 0.25


@dataclass(frozen=True, eq=False)
class AbwParams:
    """Model parameters in per-quarter decimal units.

    Attributes
    ----------
    Pi : (K, K) transition matrix, rows sum to one.
    mu : (K, 3) regime intercepts.
    Phi : (3, 3) companion matrix.
    sigma : (K, 3) diagonal of ``Sigma(k)``.
    delta0, delta1 : real short rate ``delta0 + delta1' X``.
    gamma0, gamma1 : price of risk of ``q``, ``gamma0 + gamma1 q``.
    lambda_f, lambda_pi : (K,) regime prices of risk.
    """

    Pi: np.ndarray
    mu: np.ndarray
    Phi: np.ndarray
    sigma: np.ndarray
    delta0: float
    delta1: np.ndarray
    gamma0: float = 0.0
    gamma1: float = 0.0
    lambda_f: np.ndarray = None
    lambda_pi: np.ndarray = None

    def __post_init__(self):
        Pi = np.atleast_2d(np.asarray(self.Pi, dtype=float))
        K = Pi.shape[0]
        if Pi.shape != (K, K):
            raise ParameterError("transition matrix must be square")
        if np.any(Pi < 0) or np.any(np.abs(Pi.sum(axis=1) - 1.0) > 1e-9):
            raise ParameterError("transition matrix rows must be nonnegative and sum to one")
        mu = np.asarray(self.mu, dtype=float).reshape(K, 3)
        sigma = np.asarray(self.sigma, dtype=float).reshape(K, 3)
        Phi = np.asarray(self.Phi, dtype=float).reshape(3, 3)
        lf = np.zeros(K) if self.lambda_f is None else np.asarray(self.lambda_f, dtype=float).reshape(K)
        lp = np.zeros(K) if self.lambda_pi is None else np.asarray(self.lambda_pi, dtype=float).reshape(K)
        d1 = np.asarray(self.delta1, dtype=float).reshape(3)
        if np.any(sigma < 0):
            raise ParameterError("volatilities must be nonnegative")
        if np.any(np.abs(np.linalg.eigvals(Phi)) >= 1.0):
            raise ParameterError("companion matrix must be stable")
        for name, val in (("Pi", Pi), ("mu", mu), ("sigma", sigma), ("Phi", Phi), ("lambda_f", lf), ("lambda_pi", lp), ("delta1", d1)):
            if not np.all(np.isfinite(val)):
                raise ParameterError(f"non-finite entries in {name}")
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def K(self):
        return self.Pi.shape[0]

    def stationary(self):
        return stationary_distribution(self.Pi)

    def unconditional_mean(self):
        """``(I - Phi)^{-1} sum_k pi_k mu(k)`` under the stationary regime mix."""
        return np.linalg.solve(np.eye(3) - self.Phi, self.stationary() @ self.mu)


def table5(delta0=0.0077, normalize_rows=True):
    """Four-regime parameter estimates reported for the 1985-2022 sample.

    ``delta0`` defaults to the 0.0077 restriction (the table prints 0.008).
    Row 3 of the printed transition matrix sums to 1.001, so rows are
    renormalized unless ``normalize_rows`` is false.
    """
    mu_f = np.array([-0.621, -0.020]) / 100
    mu_pi = np.array([-0.789, 0.726]) / 100
    sig_q = 0.054 / 100
    sig_f = np.array([0.400, 0.108]) / 100
    sig_pi = np.array([0.048, 0.624]) / 100
    lam_f = np.array([-19.734, 0.051])  # keyed by the inflation regime
    Pi = np.array([
        [0.744, 0.174, 0.037, 0.045],
        [0.685, 0.216, 0.052, 0.047],
        [0.001, 0.001, 0.354, 0.645],
        [0.000, 0.000, 0.020, 0.980],
    ])
    if normalize_rows:
        Pi = Pi / Pi.sum(axis=1, keepdims=True)
    mu = np.array([[0.0, mu_f[sf], mu_pi[sp]] for sf, sp in REGIME_MAP])
    sigma = np.array([[sig_q, sig_f[sf], sig_pi[sp]] for sf, sp in REGIME_MAP])
    lambda_f = np.array([lam_f[sp] for _, sp in REGIME_MAP])
    Phi = np.array([
        [0.962, 0.000, 0.000],
        [0.000, 0.969, 0.000],
        [-0.139, 0.246, 0.178],
    ])
    return AbwParams(
        Pi=Pi, mu=mu, Phi=Phi, sigma=sigma, delta0=delta0,
        delta1=np.array([1.0, 1.0, -0.199]), gamma0=0.0, gamma1=-84.137,
        lambda_f=lambda_f, lambda_pi=np.zeros(4),
    )


def single_regime(mu, Phi, sigma, delta0, delta1, gamma1=0.0, lambda_f=0.0):
    """One-regime model, mainly for degenerate test cases."""
    return AbwParams(
        Pi=np.ones((1, 1)), mu=np.atleast_2d(mu), Phi=Phi, sigma=np.atleast_2d(sigma),
        delta0=delta0, delta1=delta1, gamma1=gamma1, lambda_f=[lambda_f], lambda_pi=[0.0],
    )


def stationary_distribution(Pi):
    """Stationary distribution of an irreducible row-stochastic matrix."""
    Pi = np.atleast_2d(np.asarray(Pi, dtype=float))
    K = Pi.shape[0]
    if Pi.shape != (K, K) or np.any(Pi < 0) or np.any(np.abs(Pi.sum(axis=1) - 1) > 1e-9):
        raise ParameterError("transition matrix must be square, nonnegative and row-stochastic")
    reach = (Pi > 0) | np.eye(K, dtype=bool)
    for _ in range(max(1, int(np.ceil(np.log2(K))) + 1)):
        reach = reach | ((reach.astype(int) @ reach.astype(int)) > 0)
    if not reach.all():
        raise ParameterError("transition matrix is reducible; no unique stationary distribution")
    M = np.vstack([Pi.T - np.eye(K), np.ones((1, K))])
    rhs = np.zeros(K + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    pi = np.maximum(pi, 0.0)
    return pi / pi.sum()


@dataclass(frozen=True, eq=False)
class BondCoefficients:
    """``A[n, i]`` and ``B[n]`` for ``n = 0..n_max`` quarters."""

    A: np.ndarray
    B: np.ndarray

    @property
    def n_max(self):
        return self.A.shape[0] - 1

    def log_price(self, n, regime, X):
        return self.A[n, regime] + self.B[n] @ np.asarray(X, dtype=float)


def bond_coefficients(params, n_max=200):
    """Bond price coefficients by the closed-form recursion.

    With ``e3`` the inflation unit vector and ``e2`` its counterpart among the
    non-``q`` factors:

    ``B[n+1] = -delta1 + Phi'(B[n] - e3) - B[n,q] sigma_q gamma1 e1``

    ``A[n+1,i] = -delta0 - B[n,q] sigma_q gamma0 + log sum_j p_ij exp(
    A[n,j] + (B[n]-e3)'mu(j) - (B[n,x]-e2)'Sigma_x(j) lambda(j)
    + 0.5 (B[n]-e3)' Sigma(j) Sigma(j)' (B[n]-e3))``
    """
    if n_max < 1:
        raise ParameterError("n_max must be at least one quarter")
    K = params.K
    A = np.zeros((n_max + 1, K))
    B = np.zeros((n_max + 1, 3))
    e1 = np.array([1.0, 0.0, 0.0])
    e3 = np.array([0.0, 0.0, 1.0])
    e2x = np.array([0.0, 1.0])
    lam = np.column_stack([params.lambda_f, params.lambda_pi])  # (K, 2)
    sig = params.sigma
    sig_q = sig[:, 0]
    if np.ptp(sig_q) > 0:
        raise ParameterError("sigma_q must not depend on the regime")
    sig_q = sig_q[0]
    with np.errstate(divide="ignore"):
        log_Pi = np.log(params.Pi)
    for n in range(n_max):
        Bn = B[n]
        Bm = Bn - e3
        Bx = Bn[1:] - e2x
        expo = (
            A[n]
            + params.mu @ Bm
            - np.sum(Bx * sig[:, 1:] * lam, axis=1)
            + 0.5 * np.sum((sig * Bm) ** 2, axis=1)
        )
        A[n + 1] = -params.delta0 - Bn[0] * sig_q * params.gamma0 + logsumexp(log_Pi + expo[None, :], axis=1)
        B[n + 1] = -params.delta1 + params.Phi.T @ Bm - Bn[0] * sig_q * params.gamma1 * e1
        if not (np.all(np.isfinite(A[n + 1])) and np.all(np.isfinite(B[n + 1]))):
            bad = int(np.argmin(np.isfinite(A[n + 1])))
            raise ParameterError(f"non-finite bond coefficient at maturity n={n + 1}, regime {bad + 1}")
    return BondCoefficients(A, B)


def quarterly_yields(coeffs, regime, X, maturities=None):
    """Annualized continuously compounded yields for maturities in quarters."""
    n = np.arange(1, coeffs.n_max + 1) if maturities is None else np.asarray(maturities, dtype=int)
    logp = coeffs.A[n, regime] + coeffs.B[n] @ np.asarray(X, dtype=float)
    return -logp / n * 4.0


def yields_from_state(coeffs, regime, X, maturities=None, date=None):
    """Yield curve on the quarterly grid implied by regime ``regime`` and factors ``X``."""
    n = np.arange(1, coeffs.n_max + 1) if maturities is None else np.asarray(maturities, dtype=int)
    if np.any(n < 1) or np.any(n > coeffs.n_max):
        raise ParameterError(f"maturities must lie in 1..{coeffs.n_max}")
    return YieldCurve(n * QUARTER, quarterly_yields(coeffs, regime, X, n), date=date)


def path_rng(seed, path):
    """Independent generator for one path, keyed by ``(seed, path)``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(path)]))


def simulate_state_path(params, horizon, rng, x0=None, pi=None):
    """Regimes ``(horizon+1,)`` and factors ``(horizon+1, 3)`` for one path."""
    pi = params.stationary() if pi is None else pi
    K = params.K
    regimes = np.empty(horizon + 1, dtype=int)
    X = np.empty((horizon + 1, 3))
    cum = np.cumsum(params.Pi, axis=1)
    regimes[0] = min(int(np.searchsorted(np.cumsum(pi), rng.uniform(), side="right")), K - 1)
    X[0] = params.unconditional_mean() if x0 is None else x0
    u = rng.uniform(size=horizon)
    eps = rng.standard_normal((horizon, 3))
    for t in range(horizon):
        k = min(int(np.searchsorted(cum[regimes[t]], u[t], side="right")), K - 1)
        regimes[t + 1] = k
        X[t + 1] = params.mu[k] + params.Phi @ X[t] + params.sigma[k] * eps[t]
    return regimes, X


def _threads(threads):
    if threads is None:
        threads = int(os.environ.get("IMMUNIZE_THREADS", "1") or 1)
    return max(1, int(threads))


def simulate_states(params, horizon, n_paths, seed, threads=None):
    """Simulate ``n_paths`` regime/factor paths.

    Each path uses its own generator keyed by ``(seed, path)``, so results do
    not depend on ``threads``.
    """
    if n_paths < 1:
        raise ParameterError("n_paths must be at least one")
    pi = params.stationary()
    x0 = params.unconditional_mean()

    def one(p):
        return simulate_state_path(params, horizon, path_rng(seed, p), x0=x0, pi=pi)

    nt = _threads(threads)
    if nt == 1:
        out = [one(p) for p in range(n_paths)]
    else:
        with ThreadPoolExecutor(nt) as ex:
            out = list(ex.map(one, range(n_paths)))
    regimes = np.stack([o[0] for o in out])
    X = np.stack([o[1] for o in out])
    return regimes, X


def simulate_paths(params, coeffs, horizon, n_paths, seed, threads=None):
    """Yield-curve paths: ``result[p][t]`` is the curve at quarter ``t``."""
    regimes, X = simulate_states(params, horizon, n_paths, seed, threads)
    return [
        [yields_from_state(coeffs, regimes[p, t], X[p, t], date=f"q{t}") for t in range(horizon + 1)]
        for p in range(n_paths)
    ]


# ---------------------------------------------------------------------------
# parameter files
# ---------------------------------------------------------------------------

def _floats(text):
    return [float(v) for v in text.replace(",", " ").split()]


def load_params(path_or_stream, normalize_rows=True, row_tol=5e-3):
    """Read parameters from an INI file with Table-5 style blocks.

    Sections: ``[short_rate]`` delta0, delta1; ``[companion]`` row_q, row_f,
    row_pi; ``[moments]`` mu_f, mu_pi, sigma_q, sigma_f, sigma_pi (two regimes
    each, in percent); ``[prices_of_risk]`` gamma1, lambda_f (by inflation
    regime); ``[transition]`` row1..row4.
    """
    cp = configparser.ConfigParser()
    if hasattr(path_or_stream, "read"):
        cp.read_file(path_or_stream)
    else:
        with open(path_or_stream) as fh:
            cp.read_file(fh)
    try:
        sr, co, mo, pr, tr = (cp[s] for s in ("short_rate", "companion", "moments", "prices_of_risk", "transition"))
        Pi = np.array([_floats(tr[f"row{k}"]) for k in range(1, 5)])
        Phi = np.array([_floats(co[r]) for r in ("row_q", "row_f", "row_pi")])
        mu_f = np.array(_floats(mo["mu_f"])) / 100
        mu_pi = np.array(_floats(mo["mu_pi"])) / 100
        sig_q = float(mo["sigma_q"]) / 100
        sig_f = np.array(_floats(mo["sigma_f"])) / 100
        sig_pi = np.array(_floats(mo["sigma_pi"])) / 100
        lam_f = np.array(_floats(pr["lambda_f"]))
        gamma1 = float(pr["gamma1"])
        delta0 = float(sr["delta0"])
        delta1 = np.array(_floats(sr["delta1"]))
    except (KeyError, ValueError) as exc:
        raise ParameterError(f"bad parameter file: {exc}") from None
    sums = Pi.sum(axis=1)
    if np.any(np.abs(sums - 1) > row_tol):
        raise ParameterError(f"transition rows sum to {sums.tolist()}")
    if normalize_rows:
        Pi = Pi / sums[:, None]
    mu = np.array([[0.0, mu_f[sf], mu_pi[sp]] for sf, sp in REGIME_MAP])
    sigma = np.array([[sig_q, sig_f[sf], sig_pi[sp]] for sf, sp in REGIME_MAP])
    return AbwParams(Pi=Pi, mu=mu, Phi=Phi, sigma=sigma, delta0=delta0, delta1=delta1,
                     gamma1=gamma1, lambda_f=np.array([lam_f[sp] for _, sp in REGIME_MAP]), lambda_pi=np.zeros(4))


def dump_params_table5(stream):
    """Write the built-in estimates in the :func:`load_params` layout."""
    stream.write(
        "[short_rate]\ndelta0 = 0.0077\ndelta1 = 1.0 1.0 -0.199\n\n"
        "[companion]\nrow_q = 0.962 0.0 0.0\nrow_f = 0.0 0.969 0.0\nrow_pi = -0.139 0.246 0.178\n\n"
        "[moments]\nmu_f = -0.621 -0.020\nmu_pi = -0.789 0.726\nsigma_q = 0.054\n"
        "sigma_f = 0.400 0.108\nsigma_pi = 0.048 0.624\n\n"
        "[prices_of_risk]\ngamma1 = -84.137\nlambda_f = -19.734 0.051\n\n"
        "[transition]\nrow1 = 0.744 0.174 0.037 0.045\nrow2 = 0.685 0.216 0.052 0.047\n"
        "row3 = 0.001 0.001 0.354 0.645\nrow4 = 0.000 0.000 0.020 0.980\n"
    )
