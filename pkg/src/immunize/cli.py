"""Command-line interface: ``immunize {solve,static,dynamic,fit,simulate-yields}``.

Every command writes tidy CSV files (and SVG figures unless ``--no-svg``) to
the output directory.  Exit code 0 means all outputs were written; 1 signals
a data, solver or configuration error and 2 a usage error.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from dataclasses import replace

import numpy as np
import pandas as pd

from . import abw, fit, hedging
from .config import RunConfig, load_config, parse_floats, parse_ints, parse_names
from .curves import YieldCurve, load_cashflows, load_yield_history, standard_liability, zero_coupon_bonds
from .errors import ConfigurationError, ImmunizeError


def _write_csv(df, path):
    df.to_csv(path, index=False, lineterminator="\n")


DEFAULT_METHODS = {
    "solve": ("ri2",),
    "static": ("ri0", "ri1", "ri2", "hd", "krd"),
    "dynamic": ("ri2", "hd", "krd"),
}


def _common(p):
    p.add_argument("--config", help="INI file; command-line flags override it")
    p.add_argument("--output", "-o", help="output directory (default: out)")
    p.add_argument("--no-svg", dest="svg", action="store_const", const=False, help="skip SVG figures")
    p.add_argument("--seed", type=int)


def _portfolio_flags(p, methods=True):
    p.add_argument("--liability", help="fullHorizon, longRun, medium or shortAndLong")
    p.add_argument("--cashflows", help="CSV of date,amount used instead of a standard liability")
    p.add_argument("--bonds", type=parse_floats, help="zero-coupon maturities, e.g. 1,2,5,10,30")
    if methods:
        p.add_argument("--methods", type=parse_names, help="comma list of ri0, ri1, ri2, hd, krd")
    p.add_argument("--norm", choices=("l2", "linf"))
    p.add_argument("--nonneg", action="store_const", const=True, help="forbid short positions")
    p.add_argument("--family", choices=("chebyshev", "monomial"))
    p.add_argument("--I", type=int, dest="I", help="number of basis functions")
    p.add_argument("--T", type=float, dest="T", help="basis horizon in years")


def _data_flags(p):
    p.add_argument("--yields", help="yield history CSV (date, then one column per maturity in years)")
    p.add_argument("--percent", action="store_const", const=True, help="yields are in percent")
    p.add_argument("--skip-bad-rows", action="store_const", const=True, help="drop unparseable rows")


def build_parser():
    parser = argparse.ArgumentParser(prog="immunize", description="Robust bond portfolio immunization toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="hedge one liability on one date")
    _common(p)
    _data_flags(p)
    _portfolio_flags(p, methods=False)
    p.add_argument("--method", dest="methods", type=parse_names, help="ri0, ri1, ri2, hd or krd (comma list allowed)")
    p.add_argument("--date", help="row of the yield history to use (default: last)")
    p.add_argument("--flat-rate", type=float, help="use a flat curve instead of a history")

    p = sub.add_parser("static", help="static hedging experiment on a yield history")
    _common(p)
    _data_flags(p)
    _portfolio_flags(p)
    p.add_argument("--horizons", type=parse_ints, help="holding periods, e.g. 1-100 or 1,30")

    p = sub.add_parser("dynamic", help="dynamic hedging on simulated term-structure paths")
    _common(p)
    _portfolio_flags(p)
    p.add_argument("--params", help="model parameter file (default: built-in estimates)")
    p.add_argument("--paths", type=int)
    p.add_argument("--horizon", type=float, dest="horizon_years", help="years (default 10)")
    p.add_argument("--fixed-bonds", dest="rolling", action="store_const", const=False,
                   help="hold fixed-date bonds instead of reissuing constant maturities")

    p = sub.add_parser("fit", help="goodness of fit of the basis to yield changes")
    _common(p)
    _data_flags(p)
    p.add_argument("--d", dest="fit_d", type=parse_ints, help="horizons in rows, e.g. 1,30")
    p.add_argument("--shapley-I", dest="shapley_I", type=int, help="basis functions in the Shapley panel (<= 12)")
    p.add_argument("--I-max", dest="I_max", type=int, help="largest I in the 1 - R^2 panel")
    p.add_argument("--N", type=int, dest="N", help="monthly grid points (default 360)")
    p.add_argument("--T", type=float, dest="fit_T", help="basis horizon (default N/12)")

    p = sub.add_parser("simulate-yields", help="simulate quarterly yield curves")
    _common(p)
    p.add_argument("--params", help="model parameter file (default: built-in estimates)")
    p.add_argument("--paths", type=int)
    p.add_argument("--horizon", type=float, dest="horizon_years", help="years (default 10)")
    return parser


def resolve_config(args):
    """Merge defaults, the optional config file and explicit flags."""
    cfg = RunConfig(command=args.command)
    explicit = set()
    if getattr(args, "config", None):
        cfg = load_config(args.config, cfg)
        cfg = replace(cfg, command=args.command)
        cp = configparser.ConfigParser(interpolation=None)
        cp.read(args.config)
        if cp.has_option("basis", "i"):
            explicit.add("I")
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config") and v is not None}
    explicit |= set(overrides)
    if "methods" not in overrides and (not getattr(args, "config", None) or cfg.methods == RunConfig.methods):
        overrides["methods"] = DEFAULT_METHODS.get(args.command, cfg.methods)
    cfg = replace(cfg, **overrides)
    return cfg.validate(), explicit


def _liability(cfg):
    if cfg.cashflows:
        with open(cfg.cashflows) as fh:
            return load_cashflows(fh, name=os.path.basename(cfg.cashflows))
    return standard_liability(cfg.liability)


def _history(cfg):
    diag = []
    with open(cfg.yields) as fh:
        curves = load_yield_history(fh, percent=cfg.percent, skip_bad_rows=cfg.skip_bad_rows, diagnostics=diag)
    for msg in diag:
        print(f"warning: skipped {msg}", file=sys.stderr)
    if not curves:
        raise ConfigurationError("yield history has no rows")
    return curves


def _model(cfg):
    return abw.load_params(cfg.params) if cfg.params else abw.table5()


def _specs(cfg):
    return [hedging.parse_method(m, I=cfg.I, T=cfg.T, norm=cfg.norm, nonneg=cfg.nonneg, family=cfg.family)
            for m in cfg.methods]


def cmd_solve(cfg):
    if cfg.flat_rate is not None:
        curve = YieldCurve.flat(cfg.flat_rate)
    else:
        curves = _history(cfg)
        if cfg.date is None:
            curve = curves[-1]
        else:
            match = [c for c in curves if c.date == cfg.date]
            if not match:
                raise ConfigurationError(f"date {cfg.date!r} not in the yield history")
            curve = match[0]
    liab = _liability(cfg)
    bonds = zero_coupon_bonds(cfg.bonds)
    port_rows, summary_rows = [], []
    for spec in _specs(cfg):
        port = hedging.solve_method(spec, curve, liab, bonds)
        cert = port.certificate
        for m, z, th in zip(cfg.bonds, port.z, port.theta):
            port_rows.append((port.method, m, z, th))
        summary_rows.append({
            "method": port.method,
            "date": curve.date,
            "gross_leverage": port.gross_leverage,
            "sum_theta": float(np.sum(port.theta)),
            "V": getattr(cert, "V", np.nan),
            "norm": getattr(cert, "norm_kind", ""),
            "condition": port.diagnostics.get("condition", np.nan),
            "residual": port.diagnostics.get("residual", port.diagnostics.get("constraint_residual", np.nan)),
        })
        print(f"{port.method}: leverage {port.gross_leverage:.4f}, sum theta {np.sum(port.theta):.6f}, "
              f"V {getattr(cert, 'V', float('nan')):.6g}")
        for m, th in zip(cfg.bonds, port.theta):
            print(f"  {m:>6g}y  theta {th: .6f}")
    _write_csv(pd.DataFrame(port_rows, columns=["method", "maturity", "z", "theta"]),
               os.path.join(cfg.output, "portfolio.csv"))
    _write_csv(pd.DataFrame(summary_rows), os.path.join(cfg.output, "summary.csv"))
    if cfg.svg:
        from .plotting import plot_portfolio

        df = pd.DataFrame(port_rows, columns=["method", "maturity", "z", "theta"])
        for method, g in df.groupby("method", sort=False):
            tag = method.replace("(", "").replace(")", "").lower()
            plot_portfolio(g["maturity"].to_numpy(), g["theta"].to_numpy(), method,
                           os.path.join(cfg.output, f"portfolio_{tag}.svg"))


def cmd_static(cfg):
    curves = _history(cfg)
    res = hedging.static_experiment(curves, _liability(cfg), cfg.bonds, _specs(cfg), cfg.horizons)
    for msg in res.failures:
        print(f"warning: {msg}", file=sys.stderr)
    if res.skipped_dates:
        print(f"skipped {res.skipped_dates} dates without an observation {max(cfg.horizons)} rows ahead",
              file=sys.stderr)
    out = cfg.output
    _write_csv(res.rows, os.path.join(out, "static_rows.csv"))
    mean = res.mean_underfunding()
    _write_csv(mean.reset_index().melt(id_vars="method", var_name="d", value_name="mean_underfunding_pct"),
               os.path.join(out, "underfunding_mean.csv"))
    d_tab = 30 if 30 in cfg.horizons else max(cfg.horizons)
    _write_csv(res.percentile_table(d_tab).rename_axis("method").reset_index().assign(d=d_tab),
               os.path.join(out, "underfunding_percentiles.csv"))
    _write_csv(res.leverage_table().rename_axis("method").reset_index(), os.path.join(out, "leverage.csv"))
    print(res.percentile_table(d_tab).to_string(float_format=lambda v: f"{v:.3f}"))
    if cfg.svg:
        from .plotting import plot_underfunding

        plot_underfunding(mean, os.path.join(out, "underfunding_mean.svg"))


def cmd_dynamic(cfg):
    liab = _liability(cfg) if cfg.cashflows else cfg.liability
    res = hedging.dynamic_experiment(_model(cfg), _specs(cfg), liab, cfg.bonds, cfg.horizon_years,
                                     cfg.paths, cfg.seed, rolling=cfg.rolling)
    if res.dropped:
        print(f"dropped {res.dropped} paths", file=sys.stderr)
    out = cfg.output
    _write_csv(res.rows(), os.path.join(out, "dynamic_rows.csv"))
    mse = res.mse()
    _write_csv(pd.DataFrame({"method": list(mse), "mse": list(mse.values()),
                             "paths": len(res.paths), "dropped": res.dropped}),
               os.path.join(out, "dynamic_summary.csv"))
    p99 = res.percentile_path(99)
    _write_csv(pd.DataFrame([(m, q, q * res.delta, v) for m, arr in p99.items() for q, v in zip(res.quarters, arr)],
                            columns=["method", "quarter", "time", "p99_error"]),
               os.path.join(out, "dynamic_p99.csv"))
    for m, v in mse.items():
        print(f"{m}: end-horizon MSE {v:.6g}")
    if cfg.svg:
        from .plotting import plot_dynamic

        plot_dynamic(res, os.path.join(out, "dynamic_histogram.svg"), os.path.join(out, "dynamic_p99.svg"))


def cmd_fit(cfg):
    curves = _history(cfg)
    grid = fit.monthly_grid(cfg.N)
    shap_rows, r2_rows = [], []
    shap, r2s = {}, {}
    for d in cfg.fit_d:
        dY = fit.yield_changes(curves, d, grid)
        phi = fit.shapley_from_changes(dY, cfg.shapley_I, cfg.fit_T, grid)
        # averaged over dates like the Shapley components, so the columns add up
        total = float(np.nanmean(fit.fit_from_changes(dY, cfg.shapley_I, cfg.fit_T, grid, d).r2_by_date))
        shap[d] = np.nanmean(phi, axis=0)
        for i, v in enumerate(shap[d], start=1):
            shap_rows.append((d, i, v, total))
        r2s[d] = [fit.overall_r2(fit.fit_from_changes(dY, I, cfg.fit_T, grid, d)) for I in range(1, cfg.I_max + 1)]
        for I, v in enumerate(r2s[d], start=1):
            r2_rows.append((d, I, v, 1.0 - v))
    out = cfg.output
    _write_csv(pd.DataFrame(shap_rows, columns=["d", "basis", "shapley_r2", "total_r2"]),
               os.path.join(out, "fit_shapley.csv"))
    _write_csv(pd.DataFrame(r2_rows, columns=["d", "I", "r2", "one_minus_r2"]), os.path.join(out, "fit_r2.csv"))
    for d in cfg.fit_d:
        print(f"d={d}: 1-R^2 at I={cfg.I_max}: {1 - r2s[d][-1]:.3e}")
    if cfg.svg:
        from .plotting import plot_fit

        plot_fit(shap, r2s, os.path.join(out, "fit.svg"))


def cmd_simulate(cfg):
    model = _model(cfg)
    n_q = int(round(cfg.horizon_years / abw.QUARTER))
    coeffs = abw.bond_coefficients(model, 200)
    regimes, X = abw.simulate_states(model, n_q, cfg.paths, cfg.seed)
    terms = np.arange(1, coeffs.n_max + 1) * abw.QUARTER
    rows, states = [], []
    for p in range(cfg.paths):
        for t in range(n_q + 1):
            y = abw.quarterly_yields(coeffs, regimes[p, t], X[p, t])
            rows.append([f"{p}:{t}"] + y.tolist())
            states.append((p, t, int(regimes[p, t]) + 1, *X[p, t]))
    out = cfg.output
    _write_csv(pd.DataFrame(rows, columns=["date"] + [repr(float(m)) for m in terms]),
               os.path.join(out, "simulated_yields.csv"))
    _write_csv(pd.DataFrame(states, columns=["path", "quarter", "regime", "q", "f", "pi"]),
               os.path.join(out, "simulated_states.csv"))


COMMANDS = {"solve": cmd_solve, "static": cmd_static, "dynamic": cmd_dynamic, "fit": cmd_fit,
            "simulate-yields": cmd_simulate}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg, explicit = resolve_config(args)
    except ImmunizeError as exc:
        parser.error(str(exc))
    if args.command == "solve" and "I" in explicit:
        if any(m.strip().lower() == "hd" for m in cfg.methods) and cfg.I != len(cfg.bonds) - 1:
            parser.error(f"method hd requires I = J - 1 = {len(cfg.bonds) - 1}, got --I {cfg.I}")
    try:
        os.makedirs(cfg.output, exist_ok=True)
        COMMANDS[args.command](cfg)
    except (ImmunizeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
