"""Yield curves, cash-flow schedules and present values.

Curves are stored as continuously compounded zero yields on a grid of terms
(years).  All pricing goes through the cumulative discount rate
``x(t) = t * y(t)``, which is interpolated linearly between grid nodes
(piecewise-constant forward rates) and extended beyond the last observed term
with a constant forward rate.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractError, DomainError, FormatError, RowError

LIABILITY_KINDS = ("fullHorizon", "longRun", "medium", "shortAndLong")

FREQUENCIES = {"monthly": 12, "quarterly": 4, "semiannual": 2, "annual": 1}


@dataclass(frozen=True, eq=False)
class YieldCurve:
    """Zero-yield curve on a grid of terms.

    Parameters
    ----------
    grid_terms : array_like
        Strictly increasing positive terms in years.
    grid_yields : array_like
        Continuously compounded yields (decimal) at ``grid_terms``.
    long_forward : float, optional
        Forward rate used beyond the last grid term.  Defaults to the slope of
        ``x`` between the last two grid nodes.
    date : str, optional
        Label of the observation date.
    """

    grid_terms: np.ndarray
    grid_yields: np.ndarray
    long_forward: float | None = None
    date: str | None = None
    _x_nodes: np.ndarray = field(init=False, repr=False)
    _t_nodes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        terms = np.array(self.grid_terms, dtype=float).reshape(-1)
        yields = np.array(self.grid_yields, dtype=float).reshape(-1)
        if terms.size == 0 or terms.shape != yields.shape:
            raise ContractError("grid_terms and grid_yields must be non-empty and of equal length")
        if np.any(terms <= 0) or np.any(np.diff(terms) <= 0):
            raise ContractError("grid_terms must be positive and strictly increasing")
        if not np.all(np.isfinite(yields)):
            raise ContractError("grid_yields must be finite")
        terms.setflags(write=False)
        yields.setflags(write=False)
        x = terms * yields
        if self.long_forward is None:
            if terms.size == 1:
                lf = yields[0]
            else:
                lf = (x[-1] - x[-2]) / (terms[-1] - terms[-2])
        else:
            lf = float(self.long_forward)
        object.__setattr__(self, "grid_terms", terms)
        object.__setattr__(self, "grid_yields", yields)
        object.__setattr__(self, "long_forward", float(lf))
        t_nodes = np.concatenate(([0.0], terms))
        x_nodes = np.concatenate(([0.0], x))
        t_nodes.setflags(write=False)
        x_nodes.setflags(write=False)
        object.__setattr__(self, "_t_nodes", t_nodes)
        object.__setattr__(self, "_x_nodes", x_nodes)

    @classmethod
    def flat(cls, rate, max_term=50.0, date=None):
        """Flat curve ``y(t) = rate`` observed up to ``max_term``."""
        return cls(np.array([max_term]), np.array([rate]), long_forward=rate, date=date)

    @property
    def max_observed_term(self):
        return float(self.grid_terms[-1])

    def x(self, t):
        """Cumulative discount rate; alias of :func:`cumulative_discount`."""
        return cumulative_discount(self, t)

    def yields(self, t):
        """Zero yields ``x(t)/t`` for ``t > 0``."""
        t = np.asarray(t, dtype=float)
        if np.any(t <= 0):
            raise DomainError("yields are defined for positive terms only")
        return cumulative_discount(self, t) / t

    def discount(self, t):
        """Zero-coupon prices ``exp(-x(t))``."""
        return np.exp(-cumulative_discount(self, t))

    def shifted(self, dy):
        """Curve with every grid yield moved by ``dy`` (scalar or per-node)."""
        return YieldCurve(self.grid_terms, self.grid_yields + dy, date=self.date)


@dataclass(frozen=True, eq=False)
class CashFlowSchedule:
    """Nonnegative payments on strictly increasing dates in years."""

    dates: np.ndarray
    amounts: np.ndarray
    name: str = ""

    def __post_init__(self):
        dates = np.array(self.dates, dtype=float).reshape(-1)
        amounts = np.array(self.amounts, dtype=float).reshape(-1)
        if dates.size == 0 or dates.shape != amounts.shape:
            raise ContractError("dates and amounts must be non-empty and of equal length")
        if np.any(dates <= 0) or np.any(np.diff(dates) <= 0):
            raise ContractError("payment dates must be positive and strictly increasing")
        if np.any(amounts < 0) or not np.any(amounts > 0) or not np.all(np.isfinite(amounts)):
            raise ContractError("amounts must be finite, nonnegative and not all zero")
        dates.setflags(write=False)
        amounts.setflags(write=False)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "amounts", amounts)

    @classmethod
    def zero_coupon(cls, maturity, face=1.0):
        return cls([maturity], [face], name=f"zero{maturity:g}")

    @property
    def horizon(self):
        return float(self.dates[-1])

    def cumulative(self, t):
        """Right-continuous cumulative payout ``F(t)``."""
        idx = np.searchsorted(self.dates, np.asarray(t, dtype=float), side="right")
        csum = np.concatenate(([0.0], np.cumsum(self.amounts)))
        return csum[idx]

    def scaled(self, factor):
        return CashFlowSchedule(self.dates, self.amounts * factor, name=self.name)

    def on_grid(self, grid, atol=1e-9):
        """Amounts placed on ``grid``; every payment date must be a grid node."""
        grid = np.asarray(grid, dtype=float)
        idx = np.searchsorted(grid, self.dates - atol)
        ok = (idx < grid.size) & (np.abs(grid[np.minimum(idx, grid.size - 1)] - self.dates) <= atol)
        if not np.all(ok):
            missing = self.dates[~ok]
            raise ContractError(f"payment dates {missing[:5].tolist()} are not on the payout grid")
        out = np.zeros(grid.size)
        np.add.at(out, idx, self.amounts)
        return out


@dataclass(frozen=True)
class Perturbation:
    """Perturbation ``h = magnitude * sum_i coefficients[i] * h_i``."""

    coefficients: np.ndarray
    magnitude: float = 1.0

    def __post_init__(self):
        w = np.array(self.coefficients, dtype=float).reshape(-1)
        object.__setattr__(self, "coefficients", w)


def cumulative_discount(curve, t):
    """Cumulative discount rate ``x(t)`` of ``curve``.

    Linear in ``x`` between nodes (with ``x(0) = 0``) and linear with slope
    ``curve.long_forward`` past the last observed term.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(np.isnan(t_arr)):
        raise DomainError("cumulative discount rate requires t >= 0")
    t_max = curve.max_observed_term
    inside = np.interp(np.minimum(t_arr, t_max), curve._t_nodes, curve._x_nodes)
    beyond = np.maximum(t_arr - t_max, 0.0) * curve.long_forward
    out = inside + beyond
    return float(out) if out.ndim == 0 else out


def present_value(curve, cf, shift=None):
    """Present value ``sum_n exp(-x(t_n) - h(t_n)) f_n``.

    Parameters
    ----------
    curve : YieldCurve
    cf : CashFlowSchedule
    shift : tuple of (Perturbation, BasisSet), optional
        Perturbation of the cumulative discount rate.  Payment dates must not
        exceed the basis horizon.
    """
    x = cumulative_discount(curve, cf.dates)
    if shift is not None:
        perturbation, basis = shift
        if cf.horizon > basis.T + 1e-12:
            raise DomainError("cash flow extends past the basis horizon")
        from .basis import evaluate_perturbation

        x = x + evaluate_perturbation(basis, perturbation, cf.dates)
    return float(np.sum(np.exp(-x) * cf.amounts))


def _window(kind, dates):
    if kind == "fullHorizon":
        return np.ones(dates.size, dtype=bool)
    if kind == "longRun":
        return dates > 20.0 + 1e-9
    if kind == "medium":
        return (dates > 15.0 + 1e-9) & (dates <= 35.0 + 1e-9)
    if kind == "shortAndLong":
        return (dates <= 15.0 + 1e-9) | (dates > 35.0 + 1e-9)
    raise ContractError(f"unknown liability kind {kind!r}; expected one of {LIABILITY_KINDS}")


def standard_liability(kind, T=50.0, frequency="monthly"):
    """Unit payments over the window of ``kind``, normalized to sum to one.

    Windows (payment dates ``k/freq``): fullHorizon is ``(0, T]``, longRun is
    ``(20, T]``, medium is ``(15, 35]`` and shortAndLong is ``(0, 15]`` plus
    ``(35, T]``.
    """
    per_year = FREQUENCIES.get(frequency, frequency)
    try:
        per_year = int(per_year)
    except (TypeError, ValueError):
        raise ContractError(f"unknown frequency {frequency!r}") from None
    n = int(round(T * per_year))
    dates = np.arange(1, n + 1) / per_year
    mask = _window(kind, dates)
    dates = dates[mask]
    return CashFlowSchedule(dates, np.full(dates.size, 1.0 / dates.size), name=kind)


def rebucket(cf, step):
    """Move each payment to the end of its ``step``-long period, summing within periods."""
    ends = np.ceil(cf.dates / step - 1e-9) * step
    uniq, inv = np.unique(np.round(ends, 12), return_inverse=True)
    amounts = np.zeros(uniq.size)
    np.add.at(amounts, inv, cf.amounts)
    return CashFlowSchedule(uniq, amounts, name=cf.name)


def _parse_float(text, line, what):
    try:
        value = float(text)
    except ValueError:
        raise RowError(f"cannot parse {what} {text!r}", line) from None
    if not math.isfinite(value):
        raise RowError(f"non-finite {what} {text!r}", line)
    return value


def load_yield_history(stream, percent=False, skip_bad_rows=False, diagnostics=None):
    """Read a delimited yield table into dated curves.

    The header is ``date,<m1>,<m2>,...`` with maturities in years; each row is
    a date label followed by yields.  Yields are decimals unless ``percent``.

    Parameters
    ----------
    stream : file-like or str
        Open text stream, or the table itself as a string.
    percent : bool
        Divide yields by 100.
    skip_bad_rows : bool
        Drop rows with unparseable or non-finite yields instead of raising; the
        diagnostics are appended to ``diagnostics`` when given.

    Returns
    -------
    list of YieldCurve
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise FormatError("empty yield table") from None
    if len(header) < 2:
        raise FormatError("header must list at least one maturity")
    try:
        terms = np.array([float(h) for h in header[1:]])
    except ValueError:
        raise FormatError(f"maturities must be numeric, got {header[1:]}") from None
    if np.any(terms <= 0) or np.any(np.diff(terms) <= 0):
        raise FormatError("maturities in the header must be positive and ascending")
    scale = 0.01 if percent else 1.0
    curves = []
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            if len(row) != terms.size + 1:
                raise RowError(f"expected {terms.size + 1} fields, got {len(row)}", line_no)
            ys = [_parse_float(c, line_no, "yield") * scale for c in row[1:]]
        except RowError as exc:
            if not skip_bad_rows:
                raise
            if diagnostics is not None:
                diagnostics.append(str(exc))
            continue
        curves.append(YieldCurve(terms, np.array(ys), date=row[0].strip()))
    return curves


def write_yield_history(curves, stream):
    """Write curves sharing one grid in the format read by :func:`load_yield_history`."""
    if not curves:
        raise ContractError("no curves to write")
    terms = curves[0].grid_terms
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["date"] + [repr(float(t)) for t in terms])
    for i, c in enumerate(curves):
        if c.grid_terms.shape != terms.shape or np.any(c.grid_terms != terms):
            raise ContractError("all curves must share the same grid")
        writer.writerow([c.date if c.date is not None else str(i)] + [repr(float(y)) for y in c.grid_yields])


def load_cashflows(stream, name=""):
    """Read a ``date,amount`` CSV (dates in years) into a schedule."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None or len(header) != 2:
        raise FormatError("cash-flow file needs a two-column header")
    dates, amounts = [], []
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 2:
            raise RowError("expected two fields", line_no)
        dates.append(_parse_float(row[0], line_no, "date"))
        amounts.append(_parse_float(row[1], line_no, "amount"))
    return CashFlowSchedule(dates, amounts, name=name)


def union_grid(schedules: Iterable[CashFlowSchedule], decimals=10) -> np.ndarray:
    """Sorted union of payment dates, merging dates equal to ``decimals`` places."""
    all_dates = np.concatenate([s.dates for s in schedules])
    return np.unique(np.round(all_dates, decimals))


def zero_coupon_bonds(maturities: Sequence[float], face=1.0):
    return [CashFlowSchedule.zero_coupon(m, face) for m in maturities]
