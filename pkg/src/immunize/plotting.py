"""SVG figures for experiment outputs.

Figures are written with a fixed hash salt and no date metadata so repeated
runs produce identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "immunize"


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_portfolio(maturities, theta, method, path):
    fig, ax = plt.subplots(figsize=(5, 3.2))
    pos = np.arange(len(maturities))
    ax.bar(pos, theta, color=["tab:blue" if v >= 0 else "tab:red" for v in theta])
    ax.set_xticks(pos, [f"{m:g}y" for m in maturities])
    ax.axhline(0.0, color="k", lw=0.6)
    ax.set_ylabel("value share")
    ax.set_title(f"{method} portfolio")
    _save(fig, path)


def plot_underfunding(mean_table, path):
    """Mean underfunding (%) against holding period, one line per method."""
    fig, ax = plt.subplots(figsize=(6, 3.6))
    for method, row in mean_table.iterrows():
        ax.plot(row.index.astype(float), row.values, label=method)
    ax.set_xlabel("holding period d")
    ax.set_ylabel("mean underfunding (%)")
    ax.legend(frameon=False)
    _save(fig, path)


def plot_dynamic(result, hist_path, pctl_path, bins=40):
    fig, ax = plt.subplots(figsize=(6, 3.6))
    ends = {m: result.end_errors(m) for m in result.errors}
    hi = max(float(np.nanpercentile(e, 99)) for e in ends.values()) or 1.0
    for m, e in ends.items():
        ax.hist(e[np.isfinite(e)], bins=bins, range=(0.0, hi), histtype="step", label=m)
    ax.set_xlabel("absolute return error at horizon")
    ax.set_ylabel("paths")
    ax.legend(frameon=False)
    _save(fig, hist_path)

    fig, ax = plt.subplots(figsize=(6, 3.6))
    t = result.quarters * result.delta
    for m, p in result.percentile_path(99).items():
        ax.plot(t, p, label=m)
    ax.set_xlabel("years")
    ax.set_ylabel("99th percentile error")
    ax.legend(frameon=False)
    _save(fig, pctl_path)


def plot_fit(shapley, r2, path):
    """Shapley R^2 by basis (left) and 1 - R^2 by basis count (right).

    ``shapley`` maps horizon ``d`` to a vector; ``r2`` maps ``d`` to R^2 by I.
    """
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.6))
    for d, v in shapley.items():
        a1.plot(np.arange(1, len(v) + 1), v, marker="o", label=f"d={d}")
    a1.set_xlabel("basis function")
    a1.set_ylabel("Shapley R$^2$")
    a1.legend(frameon=False)
    for d, v in r2.items():
        a2.semilogy(np.arange(1, len(v) + 1), np.maximum(1.0 - np.asarray(v), 1e-16), marker="o", label=f"d={d}")
    a2.set_xlabel("number of basis functions I")
    a2.set_ylabel("1 - R$^2$")
    a2.legend(frameon=False)
    _save(fig, path)
