"""Rendering benchmark sweep results to PNG figures next to the CSV report.

One figure per swept grid axis, with precision / recall / F1 panels and
mean +- SD error bars; a lone grid point gets a single bar chart.  Output is
deterministic (fixed backend, no embedded timestamps or software tags) so
repeated runs produce byte-identical images.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

GRID_AXES = ("m", "T", "d", "r", "noise_family")
METRICS = ("precision", "recall", "f1")

_SAVEFIG_KW = {"dpi": 110, "metadata": {"Software": None}}


def _axis_values(aggregates, axis):
    return sorted({agg["grid_point"][axis] for agg in aggregates})


def _context_label(point, axis):
    parts = [f"{k}={point[k]}" for k in GRID_AXES if k != axis]
    return ", ".join(parts)


def render_report_figures(aggregates, out_dir, stem="report"):
    """Render one figure per swept axis; returns the list of files written."""
    out_dir = str(out_dir)
    usable = [a for a in aggregates if a.get("f1_mean") is not None]
    if not usable:
        return []
    swept = [ax for ax in GRID_AXES if len(_axis_values(usable, ax)) > 1]
    written = []
    if not swept:
        written.append(_render_single_point(usable[0], out_dir, stem))
        return written
    for axis in swept:
        written.append(_render_axis(usable, axis, out_dir, stem))
    return written


def _render_axis(aggregates, axis, out_dir, stem):
    groups = {}
    for agg in aggregates:
        key = _context_label(agg["grid_point"], axis)
        groups.setdefault(key, []).append(agg)

    fig, axes = plt.subplots(1, 3, figsize=(12, 3.6), sharey=True)
    for panel, metric in zip(axes, METRICS):
        for label, rows in sorted(groups.items()):
            rows = sorted(rows, key=lambda a: a["grid_point"][axis])
            xs = [a["grid_point"][axis] for a in rows]
            ys = [a[f"{metric}_mean"] for a in rows]
            sds = [a.get(f"{metric}_sd") or 0.0 for a in rows]
            numeric = all(isinstance(x, (int, float)) for x in xs)
            pos = xs if numeric else np.arange(len(xs))
            panel.errorbar(pos, ys, yerr=sds, marker="o", capsize=3,
                           label=label if len(groups) > 1 else None)
            if not numeric:
                panel.set_xticks(pos, [str(x) for x in xs])
        panel.set_title(metric)
        panel.set_xlabel(axis)
        panel.set_ylim(-0.05, 1.05)
        panel.grid(True, alpha=0.3)
    axes[0].set_ylabel("score")
    if len(groups) > 1:
        axes[-1].legend(fontsize=7)
    fig.tight_layout()
    path = f"{out_dir}/{stem}_vs_{axis}.png"
    fig.savefig(path, **_SAVEFIG_KW)
    plt.close(fig)
    return path


def _render_single_point(agg, out_dir, stem):
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ys = [agg[f"{metric}_mean"] for metric in METRICS]
    sds = [agg.get(f"{metric}_sd") or 0.0 for metric in METRICS]
    ax.bar(range(len(METRICS)), ys, yerr=sds, capsize=4,
           color=["#4878d0", "#ee854a", "#6acc64"])
    ax.set_xticks(range(len(METRICS)), METRICS)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("score")
    ax.set_title(_context_label(agg["grid_point"], axis="_"))
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    path = f"{out_dir}/{stem}_metrics.png"
    fig.savefig(path, **_SAVEFIG_KW)
    plt.close(fig)
    return path
