"""PNG figures written next to the CSV of an experiment."""
from __future__ import annotations

import math
import os
from typing import Callable, Dict, Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .results import ExperimentResult  # noqa: E402

__all__ = ["plot_result", "PLOTTERS"]


def _finite(vals):
    return np.array([v if isinstance(v, (int, float)) and math.isfinite(v) else np.nan for v in vals], float)


def _ldp(res: ExperimentResult, ax):
    nhf = _finite(res.column("nhf"))
    ax.plot(nhf, _finite(res.column("value")), "o-", label="finite speed")
    ax.plot(nhf, _finite(res.column("target")), "--", label="limit")
    ax.set_xscale("log")
    ax.set_xlabel("n h f(z)")
    ax.set_ylabel("-(1/nhf) log P")


def _clustering(res: ExperimentResult, ax):
    rows = res.rows
    outer = [r for r in rows if r[0] == "outer"]
    if outer:
        ax.plot([r[2] for r in outer], [r[6] for r in outer], ".-", label="outer: distance to level set")
    for t in sorted({r[5] for r in rows if r[0] == "inner"}):
        inner = [r for r in rows if r[0] == "inner" and r[5] == t]
        ax.step([r[1] for r in inner], [r[7] for r in inner], where="post", label=f"inner running min, target {t}")
    ax.set_xscale("log")
    ax.set_xlabel("n (outer) / block index (inner)")
    ax.set_ylabel("sup distance")
    ax.axhline(res.config.get("eps", 0.1), color="grey", lw=0.8, ls=":")


def _nw(res: ExperimentResult, ax):
    modes = ("nonstandard", "consistent")
    data = [[r[2] for r in res.rows if r[1] == m and math.isfinite(r[2])] for m in modes]
    ax.boxplot(data, labels=list(modes))
    ax.set_yscale("log")
    ax.set_ylabel("max |r_n(z) - r(z)|, upper half of n range")


def _oscillation(res: ExperimentResult, ax):
    emp = _finite(res.column("empirical_tail"))
    bound = _finite(res.column("analytic_bound"))
    ax.scatter(np.clip(bound, 1e-8, None), np.clip(emp, 1e-8, None), s=12)
    lim = [1e-8, max(1.0, np.nanmax(bound) if len(bound) else 1.0)]
    ax.plot(lim, lim, "k--", lw=0.8)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("analytic bound")
    ax.set_ylabel("Monte Carlo tail")


def _discrepancy(res: ExperimentResult, ax):
    n = res.column("n")
    ax.plot(n, res.column("empirical"), "o-", label="Monte Carlo")
    ax.plot(n, res.column("bound"), "--", label="bound")
    ax.set_xlabel("n")
    ax.set_ylabel("P(||H_n - DeltaPi_{n_k}|| > eps)")


def _table(xcol, ycol, logy=False):
    def draw(res: ExperimentResult, ax):
        ax.plot(_finite(res.column(xcol)), _finite(res.column(ycol)), ".-")
        ax.set_xlabel(xcol)
        ax.set_ylabel(ycol)
        if logy:
            ax.set_yscale("log")
    return draw


PLOTTERS: Dict[str, Callable] = {
    "ldp-cell": _ldp,
    "clustering": _clustering,
    "nw-contrast": _nw,
    "oscillation": _oscillation,
    "block-discrepancy": _discrepancy,
    "conjugate-table": _table("u_1", "h_value"),
    "rate-table": _table("p", "rate"),
}


def plot_result(res: ExperimentResult, out_dir: str) -> Optional[str]:
    """Render the figure for ``res`` as ``<csv stem>.png``; ``None`` when no figure applies."""
    draw = PLOTTERS.get(res.name)
    if draw is None or not res.rows:
        return None
    fig, ax = plt.subplots(figsize=(6, 4))
    try:
        draw(res, ax)
        if ax.get_legend_handles_labels()[0]:
            ax.legend(fontsize=8)
        ax.set_title(res.name)
        fig.tight_layout()
        path = os.path.join(out_dir, res.filename("png"))
        fig.savefig(path, dpi=100, metadata={"Software": None})
    finally:
        plt.close(fig)
    return path
