"""Basis functions for yield-curve perturbations.

Each basis function perturbs the cumulative discount rate as
``h_i(t) = t * g_i(t)``, so ``g_i`` is the induced yield shift.  Families:

``chebyshev``
    ``g_i(t) = T_{i-1}(2t/T - 1)``, evaluated by the three-term recurrence.
``monomial``
    ``g_i(t) = t**(i-1)``, i.e. ``h_i(t) = t**i`` (high-order duration).
``custom``
    User supplied yield loadings ``g_i``, e.g. :func:`vasicek_loading`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, ContractError, DomainError

FAMILIES = ("chebyshev", "monomial", "custom")
DEFAULT_I = 10
RANK_TOL = 1e-10


def chebyshev_table(n, s):
    """Rows ``T_0(s), ..., T_{n-1}(s)`` by the three-term recurrence."""
    s = np.asarray(s, dtype=float)
    out = np.empty((n,) + s.shape)
    if n == 0:
        return out
    out[0] = 1.0
    if n > 1:
        out[1] = s
    for k in range(2, n):
        out[k] = 2.0 * s * out[k - 1] - out[k - 2]
    return out


def chebyshev_g(i, T, t):
    """Yield loading ``g_i(t) = T_{i-1}(2t/T - 1)`` for ``0 <= t <= T``."""
    if i < 1:
        raise ContractError("basis index starts at 1")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < -1e-12) or np.any(t_arr > T * (1 + 1e-12)):
        raise DomainError(f"t must lie in [0, {T}]")
    val = chebyshev_table(i, 2.0 * t_arr / T - 1.0)[i - 1]
    return float(val) if val.ndim == 0 else val


def vasicek_loading(a):
    """Yield loading ``(1 - exp(-a t)) / (a t)`` of a one-factor Vasicek model."""

    def g(t):
        t = np.asarray(t, dtype=float)
        at = a * t
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(np.abs(at) < 1e-8, 1.0 - at / 2.0, -np.expm1(-at) / np.where(at == 0, 1.0, at))
        return out

    return g


@dataclass(frozen=True, eq=False)
class BasisSet:
    """First ``I`` basis functions of a family evaluated on a payout grid.

    Attributes
    ----------
    H : ndarray, shape (I, N)
        ``h_i(t_n)``.
    G : ndarray, shape (I, N)
        ``h_i(t_n) / t_n = g_i(t_n)``.
    """

    family: str
    I: int
    T: float
    payout_dates: np.ndarray
    functions: Sequence[Callable] | None = None
    H: np.ndarray = field(init=False, repr=False)
    G: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        dates = np.array(self.payout_dates, dtype=float).reshape(-1)
        dates.setflags(write=False)
        object.__setattr__(self, "payout_dates", dates)
        G = self.g(dates)
        G.setflags(write=False)
        H = G * dates
        H.setflags(write=False)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "H", H)

    @property
    def N(self):
        return self.payout_dates.size

    def g(self, t):
        """Matrix ``(g_i(t_k))`` of shape ``(I, len(t))``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.family == "chebyshev":
            if np.any(t < -1e-12) or np.any(t > self.T * (1 + 1e-12)):
                raise DomainError(f"t must lie in [0, {self.T}]")
            return chebyshev_table(self.I, 2.0 * t / self.T - 1.0)
        if self.family == "monomial":
            return t[None, :] ** np.arange(self.I)[:, None]
        if self.family == "custom":
            return np.vstack([np.broadcast_to(np.asarray(f(t), dtype=float), t.shape) for f in self.functions])
        raise ConfigurationError(f"unknown basis family {self.family!r}")

    def h(self, t):
        """Matrix ``(h_i(t_k)) = (t_k g_i(t_k))``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return self.g(t) * t


def _check_rank(M, name, rank_tol):
    """Raise naming the first row index (1-based) that makes ``M`` rank deficient."""
    sv = np.linalg.svd(M, compute_uv=False)
    if sv[-1] > rank_tol * sv[0]:
        return
    for k in range(1, M.shape[0] + 1):
        sv = np.linalg.svd(M[:k], compute_uv=False)
        if sv[-1] <= rank_tol * sv[0]:
            raise ConfigurationError(
                f"{name} loses full row rank at basis index {k} "
                f"(singular value ratio {sv[-1] / sv[0]:.3e} <= {rank_tol:g})"
            )


def build_basis(family, I, T, payout_dates, functions=None, rank_tol=RANK_TOL):
    """Build a :class:`BasisSet` and verify that ``H`` and ``G`` have full row rank.

    Raises
    ------
    ConfigurationError
        If ``I > N`` or a basis function is numerically dependent on the
        previous ones on this grid.
    """
    if family not in FAMILIES:
        raise ConfigurationError(f"unknown basis family {family!r}; expected one of {FAMILIES}")
    if family == "custom":
        if not functions:
            raise ConfigurationError("custom basis requires yield loading functions")
        I = len(functions)
    I = int(I)
    if I < 1:
        raise ConfigurationError("need at least one basis function")
    dates = np.asarray(payout_dates, dtype=float).reshape(-1)
    if dates.size == 0 or np.any(dates <= 0) or np.any(np.diff(dates) <= 0):
        raise ContractError("payout dates must be positive and strictly increasing")
    if family == "chebyshev" and dates[-1] > T * (1 + 1e-12):
        raise ContractError(f"payout dates exceed the basis horizon T={T}")
    if I > dates.size:
        raise ConfigurationError(
            f"basis index {dates.size + 1} exceeds the number of payout dates N={dates.size}; I={I} cannot have full row rank"
        )
    basis = BasisSet(family, I, float(T), dates, tuple(functions) if functions else None)
    _check_rank(basis.G, "G", rank_tol)
    _check_rank(basis.H, "H", rank_tol)
    return basis


def evaluate_perturbation(basis, p, t):
    """``h(t) = magnitude * sum_i w_i h_i(t)``."""
    w = np.asarray(p.coefficients, dtype=float)
    if w.size != basis.I:
        raise ContractError(f"perturbation has {w.size} coefficients, basis has I={basis.I}")
    scalar = np.ndim(t) == 0
    out = p.magnitude * (w @ basis.h(t))
    return float(out[0]) if scalar else out


def yield_shift(basis, p, t):
    """Yield-space shift ``h(t)/t`` for ``t > 0``."""
    w = np.asarray(p.coefficients, dtype=float)
    if w.size != basis.I:
        raise ContractError(f"perturbation has {w.size} coefficients, basis has I={basis.I}")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0):
        raise DomainError("yield shift is defined for t > 0")
    out = p.magnitude * (w @ basis.g(t_arr))
    return float(out[0]) if np.ndim(t) == 0 else out


def is_admissible(basis, p, tol=1e-12):
    """Whether ``max_n |h(t_n)/t_n| <= magnitude``, i.e. ``G'w`` lies in ``[-1, 1]^N``."""
    w = np.asarray(p.coefficients, dtype=float)
    return bool(np.max(np.abs(basis.G.T @ w)) <= 1.0 + tol)


def change_of_basis(source, target):
    """Matrix ``C`` with ``target.G = C @ source.G`` on the shared grid (least squares)."""
    C, *_ = np.linalg.lstsq(source.G.T, target.G.T, rcond=None)
    return C.T
