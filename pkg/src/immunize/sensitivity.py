"""Sensitivity system of a liability and a bond universe.

For discount factors ``p`` on the payout grid, liability payments ``f`` and
bond payments ``F`` (one row per bond), the normalized Gateaux sensitivities
are

    A  = H diag(p) F' / (p f')        (I x J)
    b  = H diag(p) f' / (p f')        (I,)
    a0 = p F' / (p f')                (J,)

``A_plus`` stacks ``a0`` on top of ``A`` and ``b_plus`` stacks ``1`` on ``b``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .curves import cumulative_discount, union_grid
from .errors import ContractError, DomainError


@dataclass(frozen=True, eq=False)
class SensitivitySystem:
    A: np.ndarray
    b: np.ndarray
    a0: np.ndarray
    H: np.ndarray
    G: np.ndarray
    p: np.ndarray
    f: np.ndarray
    F: np.ndarray
    dates: np.ndarray
    T: float = np.nan
    A_plus: np.ndarray = field(init=False, repr=False)
    b_plus: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "A_plus", np.vstack([self.a0[None, :], self.A]))
        object.__setattr__(self, "b_plus", np.concatenate(([1.0], self.b)))
        for name in ("A", "b", "a0", "A_plus", "b_plus"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise DomainError(f"non-finite entries in {name}")
        if not self.P > 0:
            raise DomainError("liability present value must be positive")

    @property
    def I(self):
        return self.A.shape[0]

    @property
    def J(self):
        return self.A.shape[1]

    @property
    def N(self):
        return self.dates.size

    @property
    def P(self):
        """Liability present value."""
        return float(self.p @ self.f)

    @property
    def bond_prices(self):
        return self.F @ self.p

    @property
    def rank_A_plus(self):
        return int(np.linalg.matrix_rank(self.A_plus))

    @property
    def GGt(self):
        return self.G @ self.G.T

    def equity(self, z, h_grid):
        """Equity ``sum_j z_j P_j(x+h) - P(x+h)`` for perturbations on the grid.

        ``h_grid`` has shape ``(N,)`` or ``(K, N)``; the result is scalar or ``(K,)``.
        """
        disc = self.p * np.exp(-np.asarray(h_grid, dtype=float))
        return disc @ (self.F.T @ np.asarray(z, dtype=float) - self.f)

    def funding_ratio(self, z, h_grid):
        disc = self.p * np.exp(-np.asarray(h_grid, dtype=float))
        return (disc @ (self.F.T @ np.asarray(z, dtype=float))) / (disc @ self.f)


@dataclass
class Portfolio:
    """Bond holdings with value shares and solver provenance."""

    z: np.ndarray
    theta: np.ndarray
    gross_leverage: float
    method: str
    certificate: object = None
    diagnostics: dict = field(default_factory=dict)


def build_system(curve, liability, bonds, basis):
    """Assemble the sensitivity system on the basis' payout grid.

    The grid must equal the union of liability and bond payment dates.
    """
    if len(bonds) < 2:
        raise ContractError("need at least two bonds")
    grid = basis.payout_dates
    expected = union_grid([liability, *bonds])
    if expected.size != grid.size or not np.allclose(expected, grid, rtol=0, atol=1e-9):
        raise ContractError("basis payout dates differ from the union of liability and bond dates")
    f = liability.on_grid(grid)
    F = np.vstack([b.on_grid(grid) for b in bonds])
    p = np.exp(-cumulative_discount(curve, grid))
    return system_from_arrays(basis.H, basis.G, p, f, F, grid, T=basis.T)


def system_from_arrays(H, G, p, f, F, dates, T=np.nan):
    """Sensitivity system from grid quantities (the boxed-procedure matrices)."""
    H = np.asarray(H, dtype=float)
    G = np.asarray(G, dtype=float)
    p = np.asarray(p, dtype=float)
    f = np.asarray(f, dtype=float)
    F = np.atleast_2d(np.asarray(F, dtype=float))
    P = p @ f
    if not P > 0:
        raise DomainError(f"liability present value must be positive, got {P}")
    A = (H * p) @ F.T / P
    b = (H * p) @ f / P
    a0 = F @ p / P
    return SensitivitySystem(A=A, b=b, a0=a0, H=H, G=G, p=p, f=f, F=F, dates=np.asarray(dates, dtype=float), T=T)


def shares_and_leverage(system, z):
    """Value shares ``theta_j = z_j P_j / P`` and gross leverage ``sum |theta_j|``."""
    prices = system.bond_prices
    if np.any(prices <= 0):
        raise DomainError("bond prices must be positive")
    theta = np.asarray(z, dtype=float) * prices / system.P
    return theta, float(np.sum(np.abs(theta)))


def make_portfolio(system, z, method, certificate=None, **diagnostics):
    z = np.asarray(z, dtype=float)
    theta, lev = shares_and_leverage(system, z)
    return Portfolio(z=z, theta=theta, gross_leverage=lev, method=method, certificate=certificate, diagnostics=diagnostics)
