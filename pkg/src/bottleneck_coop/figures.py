"""Render flow-balance figures from sweep and aggregate tables."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import numpy as np
from matplotlib.figure import Figure

from .metrics import is_likely

COLORS = {"counting": "#1f3a93", "non-counting": "#7fa7e0", "baseline": "#888888"}


def _alpha(dmaxmax, all_values):
    lo, hi = min(all_values), max(all_values)
    return 0.35 + 0.65 * ((dmaxmax - lo) / (hi - lo) if hi > lo else 1.0)


def _shade_reversed(ax):
    ax.axhspan(-1, 0, color="0.92", zorder=0)
    ax.axhline(0, color="0.5", lw=0.6)


def plot_flow_balance(rows: list[dict], path: "str | Path") -> Path:
    """One panel per (p_f, p_b): phi over kappa, a line per variant and dmaxmax."""
    curves = defaultdict(list)
    for r in rows:
        curves[(r["p_f"], r["p_b"], r["variant"], r["dmaxmax"])].append((r["kappa"], r["phi"]))
    p_fs = sorted({r["p_f"] for r in rows})
    p_bs = sorted({r["p_b"] for r in rows})
    dms = sorted({r["dmaxmax"] for r in rows})

    fig = Figure(figsize=(2.4 * len(p_bs) + 1, 1.9 * len(p_fs) + 1))
    axes = fig.subplots(len(p_fs), len(p_bs), sharex=True, sharey=True, squeeze=False)
    for i, p_f in enumerate(p_fs):
        for j, p_b in enumerate(p_bs):
            ax = axes[i][j]
            _shade_reversed(ax)
            for (cf, cb, variant, dm), pts in sorted(curves.items()):
                if (cf, cb) != (p_f, p_b):
                    continue
                pts.sort()
                k, phi = np.array(pts).T
                ax.plot(100 * k, phi, color=COLORS.get(variant, "k"),
                        alpha=_alpha(dm, dms), lw=0.9)
            mark = " *" if is_likely(p_f, p_b) else ""
            ax.set_title(f"p_f={p_f:.0%}, p_b={p_b:.0%}{mark}", fontsize=8)
            ax.set_ylim(-1, 1)
            ax.tick_params(labelsize=7)
            if i == len(p_fs) - 1:
                ax.set_xlabel("kappa [%]", fontsize=8)
            if j == 0:
                ax.set_ylabel("phi", fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    return path


def plot_likely(agg_rows: list[dict], path: "str | Path") -> Path:
    """Aggregated phi over kappa, a line per variant and dmaxmax."""
    curves = defaultdict(list)
    for r in agg_rows:
        curves[(r["variant"], r["dmaxmax"])].append((r["kappa"], r["mean_phi"]))
    dms = sorted({r["dmaxmax"] for r in agg_rows}) or [0]

    fig = Figure(figsize=(5, 3.6))
    ax = fig.subplots()
    _shade_reversed(ax)
    for (variant, dm), pts in sorted(curves.items()):
        pts.sort()
        k, phi = np.array(pts).T
        label = f"{variant}, dmaxmax={dm}" if dm in (dms[0], dms[-1]) else None
        ax.plot(100 * k, phi, color=COLORS.get(variant, "k"), alpha=_alpha(dm, dms),
                lw=1.0, label=label)
    ax.set_xlabel("kappa [%]")
    ax.set_ylabel("mean phi")
    ax.set_ylim(-0.5, 1)
    if curves:
        ax.legend(fontsize=7, frameon=False)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    return path
