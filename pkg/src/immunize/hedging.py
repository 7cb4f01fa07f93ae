"""Static and dynamic hedging experiments.

Static: on each date ``s`` build the hedge, hold it for ``d`` observations
and record the funding ratio ``phi = sum_j z_j P_j(x[s+d]) / P(x[s+d])``.

Dynamic: rebalance every quarter along simulated yield-curve paths,
carrying cash at the short rate, and record the absolute return error
``|V_s - P_s| / P_{s-}``.
"""

from __future__ import annotations

import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import abw
from .basis import DEFAULT_I, build_basis
from .curves import (
    CashFlowSchedule,
    cumulative_discount,
    rebucket,
    standard_liability,
    union_grid,
    zero_coupon_bonds,
)
from .errors import ContractError, ImmunizeError
from .sensitivity import Portfolio, build_system
from .solvers import ri_constraints, solve_hd, solve_krd, solve_ri_l2, solve_ri_linf

DEFAULT_BONDS = (1.0, 2.0, 5.0, 10.0, 30.0)
PERCENTILES = (90, 95, 99)
LEVERAGE_QUANTILES = (50, 95, 99)


def _threads(threads=None):
    if threads is None:
        threads = int(os.environ.get("IMMUNIZE_THREADS", "1") or 1)
    return max(1, int(threads))


def _ordered_map(fn, items, threads=None):
    nt = _threads(threads)
    if nt == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(nt) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# methods
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MethodSpec:
    """A hedging method and its settings.

    ``kind`` is ``"ri"``, ``"hd"`` or ``"krd"``.  For ``ri``, ``level`` is the
    number of exact sensitivity rows added to value matching and ``norm`` is
    ``"l2"`` or ``"linf"``.
    """

    kind: str
    level: int = 0
    norm: str = "l2"
    nonneg: bool = False
    I: int = DEFAULT_I
    T: float = 50.0
    family: str = "chebyshev"

    @property
    def name(self):
        if self.kind == "ri":
            tag = f"RI({self.level})"
            return tag if self.norm == "l2" else f"{tag}-linf"
        return self.kind.upper()


_METHOD_RE = re.compile(r"^ri[-_(]?(\d)\)?(?:[-_](l2|linf))?$")


def parse_method(text, **settings):
    """Parse ``ri0``/``RI(2)``/``ri1-linf``/``hd``/``krd`` into a :class:`MethodSpec`."""
    t = text.strip().lower()
    if t in ("hd", "krd"):
        return MethodSpec(t, **{k: v for k, v in settings.items() if k not in ("level", "norm")})
    m = _METHOD_RE.match(t)
    if not m:
        raise ContractError(f"unknown method {text!r}; expected ri0, ri1, ri2, hd or krd")
    opts = dict(settings)
    opts["level"] = int(m.group(1))
    if m.group(2):
        opts["norm"] = m.group(2)
    if opts.get("norm", "l2") not in ("l2", "linf"):
        raise ContractError(f"unknown norm {opts['norm']!r}")
    return MethodSpec("ri", **opts)


class _BasisCache:
    """Bases keyed by family, size and grid; the grid repeats across paths."""

    def __init__(self):
        self._store = {}

    def get(self, family, I, T, grid):
        key = (family, I, float(T), grid.tobytes())
        b = self._store.get(key)
        if b is None:
            b = build_basis(family, I, T, grid)
            self._store[key] = b
        return b


def solve_method(spec, curve, liability, bonds, cache=None):
    """Hedge ``liability`` with ``bonds`` on ``curve`` using ``spec``.

    A one-bond universe is fixed by value matching alone.
    """
    cache = cache or _BasisCache()
    if len(bonds) == 1:
        P = float(np.sum(curve.discount(liability.dates) * liability.amounts))
        pb = float(np.sum(curve.discount(bonds[0].dates) * bonds[0].amounts))
        z = np.array([P / pb])
        return Portfolio(z=z, theta=np.ones(1), gross_leverage=1.0, method=spec.name)
    if spec.kind == "krd":
        return solve_krd(curve, liability, bonds, method=spec.name)
    grid = union_grid([liability, *bonds])
    if spec.kind == "hd":
        basis = cache.get("monomial", len(bonds) - 1, float(grid[-1]), grid)
        return solve_hd(build_system(curve, liability, bonds, basis), method=spec.name)
    basis = cache.get(spec.family, spec.I, spec.T, grid)
    system = build_system(curve, liability, bonds, basis)
    cons = ri_constraints(system, spec.level, nonneg=spec.nonneg)
    if spec.norm == "linf":
        return solve_ri_linf(system, cons, method=spec.name)
    return solve_ri_l2(system, cons, method=spec.name)


def build_portfolio(method, curve, liability, bonds, I=DEFAULT_I, T=50.0, norm="l2", nonneg=False):
    """Convenience wrapper: ``method`` is a name such as ``"ri2"`` or a :class:`MethodSpec`."""
    spec = method if isinstance(method, MethodSpec) else parse_method(method, I=I, T=T, norm=norm, nonneg=nonneg)
    return solve_method(spec, curve, liability, bonds)


def funding_ratio(z, bonds, liability, curve):
    """``sum_j z_j P_j / P`` priced on ``curve``."""
    pb = np.array([np.sum(curve.discount(b.dates) * b.amounts) for b in bonds])
    return float(pb @ np.asarray(z, dtype=float) / np.sum(curve.discount(liability.dates) * liability.amounts))


def underfunding(phi):
    return 1.0 - np.minimum(phi, 1.0)


# ---------------------------------------------------------------------------
# static experiment
# ---------------------------------------------------------------------------


@dataclass
class StaticResult:
    """Tidy table with one row per (date, horizon, method).

    Columns: ``date, d, method, funding_ratio, underfunding, leverage``.
    """

    rows: pd.DataFrame
    skipped_dates: int = 0
    failures: list = field(default_factory=list)

    def mean_underfunding(self):
        """Mean underfunding (%) by method (rows) and horizon (columns)."""
        t = self.rows.pivot_table(index="method", columns="d", values="underfunding", aggfunc="mean", sort=False)
        return t * 100.0

    def percentile_table(self, d=30, q=PERCENTILES):
        """Percentiles (%) of underfunding at horizon ``d``, pooled over dates."""
        sub = self.rows[self.rows["d"] == d]
        if sub.empty:
            raise ContractError(f"horizon d={d} not in the result")
        out = {m: [float(np.percentile(g["underfunding"].dropna(), p)) * 100 for p in q]
               for m, g in sub.groupby("method", sort=False)}
        return pd.DataFrame.from_dict(out, orient="index", columns=[f"p{p}" for p in q])

    def leverage_table(self, q=LEVERAGE_QUANTILES):
        """Quantiles of gross leverage over dates."""
        lev = self.rows.drop_duplicates(["date", "method"])
        out = {m: [float(np.percentile(g["leverage"].dropna(), p)) for p in q]
               for m, g in lev.groupby("method", sort=False)}
        return pd.DataFrame.from_dict(out, orient="index", columns=["median" if p == 50 else f"p{p}" for p in q])


def _as_liability(liability, frequency="monthly"):
    if isinstance(liability, CashFlowSchedule):
        return liability
    return standard_liability(liability, frequency=frequency)


def _as_bonds(bonds):
    if bonds is None:
        bonds = DEFAULT_BONDS
    if all(isinstance(b, CashFlowSchedule) for b in bonds):
        return list(bonds)
    return zero_coupon_bonds([float(b) for b in bonds])


def static_experiment(history, liability, bonds=None, methods=("ri0", "ri1", "ri2", "hd", "krd"),
                      horizons=range(1, 101), threads=None, **settings):
    """Hold each date's hedge for ``d`` observations and record funding ratios.

    Parameters
    ----------
    history : list of YieldCurve
        Consecutive observations; ``d`` counts rows.
    liability : str or CashFlowSchedule
        A standard liability kind or an explicit schedule.
    methods : sequence of str or MethodSpec
    horizons : iterable of int
    settings
        Forwarded to :func:`parse_method` (``I``, ``T``, ``norm``, ``nonneg``).

    Dates without an observation ``max(horizons)`` rows ahead are skipped, so
    the table has exactly dates x methods x horizons rows.
    """
    liab = _as_liability(liability)
    bond_cf = _as_bonds(bonds)
    specs = [m if isinstance(m, MethodSpec) else parse_method(m, **settings) for m in methods]
    horizons = sorted({int(d) for d in horizons})
    if not horizons or horizons[0] < 1:
        raise ContractError("horizons must be positive integers")
    S = len(history)
    n_dates = S - horizons[-1]
    if n_dates < 1:
        raise ContractError(f"history of {S} rows is too short for horizon {horizons[-1]}")
    grid = union_grid([liab, *bond_cf])
    f = liab.on_grid(grid)
    F = np.vstack([b.on_grid(grid) for b in bond_cf])
    D = np.exp(-np.vstack([cumulative_discount(c, grid) for c in history]))
    liab_val = D @ f
    bond_val = D @ F.T
    cache = _BasisCache()
    for spec in specs:
        # warm the cache so threads share the bases
        if spec.kind == "ri":
            cache.get(spec.family, spec.I, spec.T, grid)
        elif spec.kind == "hd":
            cache.get("monomial", len(bond_cf) - 1, float(grid[-1]), grid)

    def one_date(s):
        out = []
        for spec in specs:
            try:
                port = solve_method(spec, history[s], liab, bond_cf, cache)
                z, lev, err = port.z, port.gross_leverage, None
            except ImmunizeError as exc:
                z, lev, err = None, np.nan, f"{history[s].date}: {spec.name}: {exc}"
            for d in horizons:
                phi = np.nan if z is None else float(bond_val[s + d] @ z / liab_val[s + d])
                out.append((history[s].date if history[s].date is not None else s, d, spec.name,
                            phi, float(underfunding(phi)), lev))
            if err:
                out.append(err)
        return out

    results = _ordered_map(one_date, range(n_dates), threads)
    rows, failures = [], []
    for r in results:
        for item in r:
            (failures if isinstance(item, str) else rows).append(item)
    df = pd.DataFrame(rows, columns=["date", "d", "method", "funding_ratio", "underfunding", "leverage"])
    return StaticResult(df, skipped_dates=S - n_dates, failures=failures)


# ---------------------------------------------------------------------------
# dynamic experiment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DynamicState:
    """Fund state after rebalancing at time ``s`` (years).

    ``maturities`` are the remaining maturities of the held bonds at ``s``.
    The cash position satisfies ``C = V - sum_j z_j exp(-x_s(t_j))``.
    """

    s: float
    P: float
    V: float
    C: float
    z: np.ndarray
    maturities: np.ndarray
    R: float
    error: float = np.nan

    @property
    def E(self):
        return self.V - self.P


def _remaining(liability, s, shift, tol=1e-9):
    """Payments after ``s`` moved onto terms measured from ``s + shift``."""
    mask = liability.dates - s - shift > tol
    if not np.any(mask):
        return None
    return CashFlowSchedule(liability.dates[mask] - s - shift, liability.amounts[mask])


def _payment_at(liability, s, tol=1e-9):
    hit = np.abs(liability.dates - s) <= tol
    return float(liability.amounts[hit].sum())


def _liability_value(curve, liability, s):
    rem = _remaining(liability, s, 0.0)
    if rem is None:
        return 0.0
    return float(np.sum(curve.discount(rem.dates) * rem.amounts))


def _rebalance(spec, curve, s, V, liability, maturities, delta, cache):
    """Solve on the maturity-reduced set and return ``(z, maturities, C)``."""
    maturities = np.asarray(maturities, dtype=float)
    reduced_liab = _remaining(liability, s, delta)
    keep = maturities - delta > 1e-9
    mats = maturities[keep]
    z = np.zeros(mats.size)
    if reduced_liab is not None and mats.size:
        bonds = zero_coupon_bonds(mats - delta)
        z = solve_method(spec, curve, reduced_liab, bonds, cache).z
    C = V - float(np.sum(z * curve.discount(mats))) if mats.size else V
    return z, mats, C


def initial_state(spec, curve, liability, maturities, delta=0.25, cache=None):
    """Fund at ``s = 0`` with ``V_0 = P_0``."""
    P0 = _liability_value(curve, liability, 0.0)
    z, mats, C = _rebalance(spec, curve, 0.0, P0, liability, maturities, delta, cache or _BasisCache())
    return DynamicState(0.0, P0, P0, C, z, mats, float(np.exp(cumulative_discount(curve, delta))), 0.0)


def dynamic_step(state, curve_now, spec, liability, maturities=None, delta=0.25, cache=None):
    """Advance one rebalance period.

    ``V_s = R C + sum_j z_j exp(-x_s(t_j - delta)) - f_s``, then the fund is
    rebalanced into bonds with ``maturities`` (``None`` keeps the aged held
    bonds) solved on the maturity-reduced instrument set.
    """
    s = state.s + delta
    aged = state.maturities - delta
    held = float(np.sum(state.z * np.exp(-cumulative_discount(curve_now, np.maximum(aged, 0.0)))))
    f_s = _payment_at(liability, s)
    V = state.R * state.C + held - f_s
    P = _liability_value(curve_now, liability, s)
    err = abs(V - P) / state.P if state.P > 0 else np.nan
    new_mats = aged if maturities is None else maturities
    z, mats, C = _rebalance(spec, curve_now, s, V, liability, new_mats, delta, cache or _BasisCache())
    R = float(np.exp(cumulative_discount(curve_now, delta)))
    return DynamicState(s, P, V, C, z, mats, R, err)


def run_path(curves, spec, liability, bonds=DEFAULT_BONDS, delta=0.25, rolling=True, cache=None):
    """Errors ``|V_s - P_s| / P_{s-}`` for quarters ``1..len(curves)-1``.

    Liability payments must fall on rebalance dates (see :func:`rebucket`).
    """
    steps = liability.dates / delta
    if np.any(np.abs(steps - np.round(steps)) > 1e-9):
        raise ContractError("liability payments must fall on rebalance dates; rebucket first")
    cache = cache or _BasisCache()
    mats = np.asarray(bonds, dtype=float)
    state = initial_state(spec, curves[0], liability, mats, delta, cache)
    errs = np.empty(len(curves) - 1)
    for q in range(1, len(curves)):
        state = dynamic_step(state, curves[q], spec, liability, mats if rolling else None, delta, cache)
        errs[q - 1] = state.error
    return errs


@dataclass
class DynamicResult:
    """Error panel ``errors[method]`` of shape ``(paths, quarters)``."""

    errors: dict
    paths: np.ndarray
    delta: float
    dropped: int = 0
    failures: list = field(default_factory=list)

    @property
    def quarters(self):
        n = next(iter(self.errors.values())).shape[1]
        return np.arange(1, n + 1)

    def end_errors(self, method):
        return self.errors[method][:, -1]

    def mse(self):
        return {m: float(np.nanmean(e[:, -1] ** 2)) for m, e in self.errors.items()}

    def percentile_path(self, q=99):
        return {m: np.nanpercentile(e, q, axis=0) for m, e in self.errors.items()}

    def histogram(self, method, bins=50, range_=None):
        return np.histogram(self.end_errors(method), bins=bins, range=range_)

    def rows(self):
        """Tidy table ``path, quarter, time, method, error``."""
        frames = []
        for m, e in self.errors.items():
            P, Q = e.shape
            frames.append(pd.DataFrame({
                "path": np.repeat(self.paths, Q),
                "quarter": np.tile(self.quarters, P),
                "time": np.tile(self.quarters * self.delta, P),
                "method": m,
                "error": e.reshape(-1),
            }))
        return pd.concat(frames, ignore_index=True)


def dynamic_experiment(model, methods=("ri2", "hd", "krd"), liability="fullHorizon", bonds=DEFAULT_BONDS,
                       horizon=10.0, paths=500, seed=0, delta=0.25, rolling=True, threads=None, **settings):
    """Quarterly rebalancing along simulated term-structure paths.

    Parameters
    ----------
    model : AbwParams
    liability : str or CashFlowSchedule
        Standard kinds are built monthly and moved to quarter ends.
    bonds : sequence of float
        Maturities; reissued every quarter when ``rolling``, otherwise held
        to maturity as fixed-date bonds.
    paths, seed
        Path ``p`` uses the generator keyed by ``(seed, p)``, so results do
        not depend on ``threads``.
    """
    if paths < 1:
        raise ContractError("paths must be at least one")
    if abs(delta - abw.QUARTER) > 1e-12:
        raise ContractError("the term-structure model is quarterly; delta must be 0.25")
    liab = rebucket(_as_liability(liability), delta)
    specs = [m if isinstance(m, MethodSpec) else parse_method(m, **settings) for m in methods]
    n_q = int(round(horizon / delta))
    n_max = int(np.ceil(max(liab.horizon, max(bonds)) / delta))
    coeffs = abw.bond_coefficients(model, n_max)
    cache = _BasisCache()
    pi, x0 = model.stationary(), model.unconditional_mean()

    def one_path(p):
        try:
            regimes, X = abw.simulate_state_path(model, n_q, abw.path_rng(seed, p), x0=x0, pi=pi)
            curves = [abw.yields_from_state(coeffs, regimes[t], X[t]) for t in range(n_q + 1)]
            return {s.name: run_path(curves, s, liab, bonds, delta, rolling, cache) for s in specs}
        except (ImmunizeError, FloatingPointError, np.linalg.LinAlgError) as exc:
            return f"path {p}: {exc}"

    results = _ordered_map(one_path, range(paths), threads)
    kept = [p for p, r in enumerate(results) if not isinstance(r, str)]
    failures = [r for r in results if isinstance(r, str)]
    if not kept:
        raise ImmunizeError(f"all {paths} paths failed; first failure: {failures[0]}")
    errors = {s.name: np.vstack([results[p][s.name] for p in kept]) for s in specs}
    return DynamicResult(errors, np.array(kept), delta, dropped=len(failures), failures=failures)
