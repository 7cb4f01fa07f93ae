"""Immunizing portfolio solvers.

* :func:`solve_hd` -- exact matching ``A_plus z = b_plus`` when ``I = J - 1``.
* :func:`solve_ri_l2` -- minmax under Euclidean perturbations, a constrained
  generalized least squares problem with weight ``(G G')^{-1}``.
* :func:`solve_ri_linf` -- minmax under sup-norm perturbations, one linear
  program obtained by dualizing the inner maximization.
* :func:`solve_krd` -- key rate duration matching.
* :func:`jacobi_decompose` -- the GLS portfolio as a determinant-weighted
  average of square ("elemental") solutions.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import linprog

from .curves import cumulative_discount
from .errors import ContractError, SolverError
from .sensitivity import make_portfolio

JACOBI_MAX_I = 14
NONNEG_MAX_J = 16
_HIGHS_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
    "presolve": True,
}


@dataclass(frozen=True)
class ConstraintSet:
    """Linear portfolio constraints ``R z = r`` and optionally ``z >= 0``."""

    R: np.ndarray
    r: np.ndarray
    nonneg: bool = False

    def __post_init__(self):
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        r = np.asarray(self.r, dtype=float).reshape(-1)
        if R.shape[0] != r.size:
            raise ContractError("R and r disagree in the number of constraints")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "r", r)

    @property
    def M(self):
        return self.R.shape[0]


@dataclass(frozen=True)
class MinmaxCertificate:
    """Minmax value ``V`` with an adversarial coefficient vector ``w_star``."""

    V: float
    w_star: np.ndarray
    norm_kind: str


def value_matching(system, nonneg=False):
    return ri_constraints(system, 0, nonneg=nonneg)


def ri_constraints(system, level, nonneg=False):
    """Constraints of RI(level): value matching plus the first ``level`` sensitivity rows.

    Level 1 adds duration matching (row ``i = 1``) and level 2 adds the second
    basis row (convexity for polynomial bases).
    """
    if level < 0 or level > system.I:
        raise ContractError(f"constraint level {level} outside 0..{system.I}")
    R = system.A_plus[: level + 1]
    r = system.b_plus[: level + 1]
    return ConstraintSet(R, r, nonneg=nonneg)


# ---------------------------------------------------------------------------
# linear algebra helpers
# ---------------------------------------------------------------------------


def _whitening(system):
    """Upper-triangular ``Rg`` with ``G G' = Rg' Rg`` (QR of ``G'``)."""
    Rg = np.linalg.qr(system.G.T, mode="r")
    d = np.abs(np.diag(Rg))
    if d.min() <= 1e-13 * d.max():
        raise SolverError("G G' is singular; the basis is rank deficient on the grid")
    return Rg


def _whiten(system, Rg=None):
    Rg = _whitening(system) if Rg is None else Rg
    Aw = solve_triangular(Rg.T, system.A, lower=True)
    bw = solve_triangular(Rg.T, system.b, lower=True)
    return Aw, bw


def _full_row_rank(R, tol=1e-12):
    sv = np.linalg.svd(R, compute_uv=False)
    return sv.size == R.shape[0] and sv[-1] > tol * max(sv[0], 1.0)


def _eqls(Aw, bw, R, r, what="A"):
    """``argmin ||Aw z - bw||`` subject to ``R z = r`` by the null-space method."""
    U, s, Vt = np.linalg.svd(R)
    if s.size < R.shape[0] or s[-1] <= 1e-12 * s[0]:
        raise SolverError("constraint matrix R does not have full row rank")
    M = R.shape[0]
    zp = Vt[:M].T @ ((U.T @ r) / s)
    Nmat = Vt[M:].T
    if Nmat.shape[1] == 0:
        return zp
    B = Aw @ Nmat
    sb = np.linalg.svd(B, compute_uv=False)
    if sb.size < Nmat.shape[1] or sb[-1] <= 1e-13 * max(sb[0], 1e-300):
        raise SolverError(f"{what} restricted to the constraint null space is rank deficient; solution not unique")
    y, *_ = np.linalg.lstsq(B, bw - Aw @ zp, rcond=None)
    z = zp + Nmat @ y
    return z


def _eqls_nonneg(Aw, bw, R, r, what="A"):
    """Equality-constrained least squares with ``z >= 0`` by enumerating active faces."""
    J = Aw.shape[1]
    if J > NONNEG_MAX_J:
        raise SolverError(f"nonnegative least squares supports J <= {NONNEG_MAX_J}")
    best, best_obj = None, np.inf
    for k in range(J + 1):
        for zero_set in itertools.combinations(range(J), k):
            free = [j for j in range(J) if j not in zero_set]
            if not free:
                continue
            Rf = R[:, free]
            if not _full_row_rank(Rf):
                continue
            try:
                zf = _eqls(Aw[:, free], bw, Rf, r, what)
            except SolverError:
                continue
            if np.linalg.norm(Rf @ zf - r) > 1e-9 * (1 + np.linalg.norm(r)):
                continue
            if np.any(zf < -1e-12):
                continue
            z = np.zeros(J)
            z[free] = np.maximum(zf, 0.0)
            obj = float(np.sum((Aw @ z - bw) ** 2))
            if best is None or obj < best_obj - 1e-15 * (1 + abs(best_obj)):
                best, best_obj = z, obj
    if best is None:
        raise SolverError("no nonnegative portfolio satisfies the constraints")
    return best


# ---------------------------------------------------------------------------
# inner maximization
# ---------------------------------------------------------------------------


def inner_value(system, z, norm="linf"):
    """Worst-case first-order loss ``max_w <w, A z - b>`` over admissible ``w``.

    ``norm="linf"`` uses ``G'w`` in ``[-1, 1]^N`` (a linear program);
    ``norm="l2"`` uses ``||G'w|| <= 1`` with closed form ``sqrt(c'(GG')^{-1}c)``.
    """
    c = system.A @ np.asarray(z, dtype=float) - system.b
    if norm == "l2":
        Rg = _whitening(system)
        cw = solve_triangular(Rg.T, c, lower=True)
        V = float(np.linalg.norm(cw))
        if V == 0.0:
            return MinmaxCertificate(0.0, np.zeros(system.I), "l2")
        w = solve_triangular(Rg, cw, lower=False) / V
        return MinmaxCertificate(V, w, "l2")
    if norm != "linf":
        raise ContractError(f"unknown norm {norm!r}")
    scale = float(np.max(np.abs(c)))
    if scale == 0.0:
        return MinmaxCertificate(0.0, np.zeros(system.I), "linf")
    # the value is homogeneous in c; normalizing keeps HiGHS away from tiny costs
    Gt = system.G.T
    for algo in ("highs-ds", "highs-ipm"):
        res = linprog(
            -c / scale,
            A_ub=np.vstack([Gt, -Gt]),
            b_ub=np.ones(2 * system.N),
            bounds=[(None, None)] * system.I,
            method=algo,
            options=_HIGHS_OPTIONS,
        )
        if res.status == 0:
            break
    if res.status != 0:
        raise SolverError(f"inner linear program failed: {res.message}")
    res.fun = float(res.fun) * scale
    return MinmaxCertificate(max(0.0, -float(res.fun)), np.asarray(res.x), "linf")


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------


def solve_hd(system, method="HD"):
    """Exact matching ``z = A_plus^{-1} b_plus`` (requires ``I = J - 1``)."""
    if system.I != system.J - 1:
        raise ContractError(f"exact matching needs I = J - 1, got I={system.I}, J={system.J}")
    Ap = system.A_plus
    cond = float(np.linalg.cond(Ap))
    if not np.isfinite(cond) or cond > 1.0 / np.finfo(float).eps:
        raise SolverError(f"A_plus is singular (condition number {cond:.3e})", condition=cond)
    z = np.linalg.solve(Ap, system.b_plus)
    resid = float(np.linalg.norm(Ap @ z - system.b_plus) / np.linalg.norm(system.b_plus))
    cert = MinmaxCertificate(0.0, np.zeros(system.I), "exact")
    return make_portfolio(system, z, method, cert, condition=cond, residual=resid)


def solve_ri_l2(system, constraints=None, method="RI-l2"):
    """Robust immunization under Euclidean perturbations.

    Minimizes ``(Az - b)'(GG')^{-1}(Az - b)`` over ``R z = r`` (and ``z >= 0``
    when requested).  The certificate holds the minmax value
    ``V = sqrt((Az - b)'(GG')^{-1}(Az - b))``.
    """
    if constraints is None:
        constraints = value_matching(system)
    if np.linalg.matrix_rank(np.vstack([constraints.R, system.A])) < system.J:
        raise SolverError("stacked constraint and sensitivity matrix does not have full column rank")
    if not _full_row_rank(constraints.R):
        raise SolverError("constraint matrix R does not have full row rank")
    Rg = _whitening(system)
    Aw, bw = _whiten(system, Rg)
    if constraints.nonneg:
        z = _eqls_nonneg(Aw, bw, constraints.R, constraints.r)
    else:
        z = _eqls(Aw, bw, constraints.R, constraints.r)
    cert = inner_value(system, z, norm="l2")
    resid = float(np.linalg.norm(constraints.R @ z - constraints.r))
    return make_portfolio(system, z, method, cert, constraint_residual=resid)


def gls_closed_form(system, constraints):
    """Constrained GLS portfolio by the explicit normal-equation formula.

    ``z = Q^{-1}A~'b + Q^{-1}R'[R Q^{-1} R']^{-1}(r - R Q^{-1} A~'b)`` with
    ``A~ = (GG')^{-1}A`` and ``Q = A~'A``.
    """
    At = np.linalg.solve(system.GGt, system.A)
    Q = At.T @ system.A
    R, r = constraints.R, constraints.r
    z0 = np.linalg.solve(Q, At.T @ system.b)
    QiRt = np.linalg.solve(Q, R.T)
    return z0 + QiRt @ np.linalg.solve(R @ QiRt, r - R @ z0)


def _linf_lp(system, constraints):
    J, N = system.J, system.N
    G = system.G
    A_eq = np.block([
        [-system.A, G, -G],
        [constraints.R, np.zeros((constraints.M, 2 * N))],
    ])
    b_eq = np.concatenate([-system.b, constraints.r])
    cost = np.concatenate([np.zeros(J), np.ones(2 * N)])
    zb = (0, None) if constraints.nonneg else (None, None)
    bounds = [zb] * J + [(0, None)] * (2 * N)
    res = linprog(cost, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs", options=_HIGHS_OPTIONS)
    if res.status == 2:
        raise SolverError("portfolio constraints are infeasible")
    if res.status == 3:
        raise ContractError("minmax linear program is unbounded; A_plus must have full column rank")
    if res.status != 0:
        raise SolverError(f"minmax linear program failed: {res.message}")
    return np.asarray(res.x[:J]), float(res.fun)


def _min_norm_optimal(system, constraints, V, slack):
    """Minimum-norm portfolio among those with inner value at most ``V + slack``."""
    import cvxpy as cp

    N = system.N
    z = cp.Variable(system.J)
    u = cp.Variable(N, nonneg=True)
    v = cp.Variable(N, nonneg=True)
    cons = [
        system.G @ (u - v) == system.A @ z - system.b,
        cp.sum(u + v) <= V + slack,
        constraints.R @ z == constraints.r,
    ]
    if constraints.nonneg:
        cons.append(z >= 0)
    prob = cp.Problem(cp.Minimize(cp.sum_squares(z)), cons)
    try:
        prob.solve(solver=cp.CLARABEL)
    except cp.error.SolverError:
        return None
    if prob.status not in ("optimal", "optimal_inaccurate") or z.value is None:
        return None
    return np.asarray(z.value, dtype=float)


def solve_ri_linf(system, constraints=None, method="RI-linf", tie_break=True):
    """Robust immunization under sup-norm perturbations.

    Solves ``min_{z in Z} max_{G'w in [-1,1]^N} <w, Az - b>`` as the single
    linear program

        min 1'(u + v)  s.t.  G(u - v) = Az - b,  R z = r,  u, v >= 0.

    When the optimal portfolio is not unique the minimum-norm optimum is
    returned.  The certificate's ``w_star`` attains the inner maximum.
    """
    if constraints is None:
        constraints = value_matching(system)
    if system.I < system.J - 1:
        raise ContractError(f"need I >= J - 1, got I={system.I}, J={system.J}")
    if np.linalg.matrix_rank(system.A_plus) < system.J:
        raise ContractError("A_plus does not have full column rank")
    z, V_lp = _linf_lp(system, constraints)
    cert = inner_value(system, z, "linf")
    candidates = [(cert.V, z, cert)]
    # polish: an exactly matching portfolio beats any LP round-off
    if cert.V <= 1e-7 * max(1.0, np.abs(system.b).max()):
        try:
            z_ls = _eqls(system.A, system.b, constraints.R, constraints.r)
            if not constraints.nonneg or np.all(z_ls >= 0):
                c_ls = inner_value(system, z_ls, "linf")
                candidates.append((c_ls.V, z_ls, c_ls))
        except SolverError:
            pass
    V_best = min(c[0] for c in candidates)
    tol = 1e-9 * max(1.0, V_best)
    if tie_break and V_best > tol:
        z_mn = _min_norm_optimal(system, constraints, V_best, tol)
        if z_mn is not None:
            feas = np.linalg.norm(constraints.R @ z_mn - constraints.r) <= 1e-9 * (1 + np.linalg.norm(constraints.r))
            if feas and (not constraints.nonneg or np.all(z_mn >= -1e-12)):
                c_mn = inner_value(system, z_mn, "linf")
                if c_mn.V <= V_best + tol:
                    candidates.append((c_mn.V, z_mn, c_mn))
    ok = [c for c in candidates if c[0] <= V_best + tol]
    V, z, cert = min(ok, key=lambda c: (float(np.linalg.norm(c[1])), c[0]))
    resid = float(np.linalg.norm(constraints.R @ z - constraints.r))
    return make_portfolio(system, z, method, cert, lp_value=V_lp, constraint_residual=resid)


# ---------------------------------------------------------------------------
# elemental decomposition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ElementalEstimate:
    rows: tuple
    weight: float
    z: np.ndarray


def jacobi_decompose(system):
    """Value-matched GLS portfolio as a weighted average of elemental solutions.

    For every set ``s`` of ``J`` rows of ``A_plus`` containing the value
    matching row (row 0), ``z(s) = A_plus(s)^{-1} b_plus(s)`` with weight
    proportional to ``det(At_plus(s)) det(A_plus(s))``, where ``At_plus``
    stacks ``a0`` on ``(GG')^{-1} A``.  Numerically singular subsets get zero
    weight and no elemental estimate.

    Returns
    -------
    list of ElementalEstimate
        ``rows`` uses 0 for the value-matching row and ``i`` for basis ``i``.
    """
    I, J = system.I, system.J
    if I <= J - 1:
        raise ContractError("elemental decomposition needs I > J - 1")
    if I > JACOBI_MAX_I:
        raise ContractError(
            f"refusing to enumerate {math.comb(I, J - 1)} subsets; I must be <= {JACOBI_MAX_I}"
        )
    Ap = system.A_plus
    bp = system.b_plus
    Atp = np.vstack([system.a0[None, :], np.linalg.solve(system.GGt, system.A)])
    raw = []
    for rest in itertools.combinations(range(1, I + 1), J - 1):
        rows = (0,) + rest
        sub = Ap[list(rows)]
        d = np.linalg.det(sub)
        dt = np.linalg.det(Atp[list(rows)])
        if d == 0.0 or np.linalg.cond(sub) > 1.0 / np.finfo(float).eps:
            raw.append((rows, 0.0, None))
            continue
        raw.append((rows, dt * d, np.linalg.solve(sub, bp[list(rows)])))
    total = sum(w for _, w, _ in raw)
    if total == 0.0:
        raise SolverError("all elemental subsets are singular")
    return [ElementalEstimate(rows, w / total, z) for rows, w, z in raw]


def combine_elemental(estimates, J):
    z = np.zeros(J)
    for e in estimates:
        if e.z is not None:
            z += e.weight * e.z
    return z


# ---------------------------------------------------------------------------
# key rate durations
# ---------------------------------------------------------------------------


def key_rate_tent(key_rates, k, t):
    """Unit key-rate shift profile for key ``k`` evaluated at terms ``t``.

    Linear between the neighbouring key rates, one at ``key_rates[k]``, held at
    one below the first and beyond the last key rate.
    """
    kr = np.asarray(key_rates, dtype=float)
    if k < 0 or k >= kr.size:
        raise ContractError(f"key rate index {k} outside 0..{kr.size - 1}")
    unit = np.zeros(kr.size)
    unit[k] = 1.0
    # np.interp holds the end values flat outside [kr[0], kr[-1]]
    return np.interp(np.asarray(t, dtype=float), kr, unit)


def _krd_prices(curve, cfs, key_rates, k, delta):
    """Prices of each schedule under the down and up key-rate shifts."""
    down, up = [], []
    for cf in cfs:
        t = cf.dates
        x = cumulative_discount(curve, t)
        shift = delta * t * key_rate_tent(key_rates, k, t)
        down.append(np.sum(np.exp(-(x - shift)) * cf.amounts))
        up.append(np.sum(np.exp(-(x + shift)) * cf.amounts))
    return np.array(down), np.array(up)


def key_rate_duration(curve, cf, key_rates, k, delta=0.01):
    """``(P(y-) - P(y+)) / (2 delta P(y))`` for a tent shift at key rate ``k``."""
    if delta <= 0:
        raise ContractError("delta must be positive")
    if np.any(np.diff(np.asarray(key_rates, dtype=float)) <= 0):
        raise ContractError("key rates must be strictly increasing")
    down, up = _krd_prices(curve, [cf], key_rates, k, delta)
    P = np.sum(curve.discount(cf.dates) * cf.amounts)
    return float((down[0] - up[0]) / (2.0 * delta * P))


def krd_matrix(curve, liability, bonds, key_rates, delta=0.01):
    """Key rate exposures normalized by the liability value.

    Returns ``(K, k_liab, a0)`` where ``K[k, j]`` is bond ``j``'s exposure per
    unit face, ``k_liab[k]`` the liability's KRD and ``a0`` the bond prices
    over the liability price.
    """
    PL = np.sum(curve.discount(liability.dates) * liability.amounts)
    prices = np.array([np.sum(curve.discount(b.dates) * b.amounts) for b in bonds])
    K = np.empty((len(key_rates), len(bonds)))
    kl = np.empty(len(key_rates))
    for k in range(len(key_rates)):
        down, up = _krd_prices(curve, [liability, *bonds], key_rates, k, delta)
        diff = (down - up) / (2.0 * delta * PL)
        kl[k] = diff[0]
        K[k] = diff[1:]
    return K, kl, prices / PL


def solve_krd(curve, liability, bonds, key_rates=None, delta=0.01, method="KRD"):
    """Least-squares key-rate matching under value matching.

    Minimizes ``sum_k (KRD_k(portfolio) - KRD_k(liability))^2`` subject to
    ``a0 z = 1``.  With value matching the portfolio KRD is linear in ``z``.
    """
    if key_rates is None:
        key_rates = [float(b.dates[-1]) for b in bonds]
    key_rates = np.asarray(key_rates, dtype=float)
    if key_rates.size != len(bonds):
        raise ContractError("number of key rates must equal the number of bonds")
    if np.any(np.diff(key_rates) <= 0):
        raise ContractError("key rates must be strictly increasing")
    K, kl, a0 = krd_matrix(curve, liability, bonds, key_rates, delta)
    try:
        z = _eqls(K, kl, a0[None, :], np.array([1.0]), what="KRD matrix")
    except SolverError as exc:
        raise SolverError(f"degenerate key rate duration matrix: {exc}") from None
    theta = z * a0
    lev = float(np.sum(np.abs(theta)))
    from .sensitivity import Portfolio

    objective = float(np.sum((K @ z - kl) ** 2))
    return Portfolio(z=z, theta=theta, gross_leverage=lev, method=method, certificate=None,
                     diagnostics={"objective": objective, "key_rates": key_rates.tolist()})


# ---------------------------------------------------------------------------
# guaranteed funding
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FundingReport:
    min_equity: float
    min_relative_equity: float
    n_samples: int
    violations: int


def sample_admissible(system, n, magnitude, rng, radial=True):
    """Random coefficient vectors ``w`` scaled so ``max|G'w| = magnitude * U``.

    ``U`` is uniform on ``[0, 1]`` when ``radial`` is true and one otherwise.
    Returns ``(W, h_grid)`` with ``h_grid = W @ H``.
    """
    W = rng.standard_normal((n, system.I))
    scale = np.max(np.abs(W @ system.G), axis=1)
    scale[scale == 0] = 1.0
    radius = rng.uniform(0.0, 1.0, n) if radial else np.ones(n)
    W = W / scale[:, None] * (magnitude * radius)[:, None]
    return W, W @ system.H


def check_guaranteed_funding(system, z, n_samples=10_000, delta_max=0.05, seed=0):
    """Sample in-span perturbations and report the smallest equity.

    Requires a single-date liability and a long-only portfolio.  Perturbations
    move yields on the payout grid by at most ``delta_max``.
    """
    z = np.asarray(z, dtype=float)
    if np.count_nonzero(system.f) != 1:
        raise ContractError("guaranteed funding applies to single-date liabilities only")
    if np.any(z < -1e-12):
        raise ContractError("guaranteed funding requires a nonnegative portfolio")
    rng = np.random.default_rng(seed)
    _, h = sample_admissible(system, n_samples, delta_max, rng)
    h = np.vstack([np.zeros(system.N), h])
    eq = system.equity(z, h)
    P = system.P
    return FundingReport(
        min_equity=float(eq.min()),
        min_relative_equity=float(eq.min() / P),
        n_samples=int(h.shape[0]),
        violations=int(np.sum(eq < -1e-12 * P)),
    )
