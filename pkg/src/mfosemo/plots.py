"""Figure rendering for run and summary outputs.

Figures are written next to the delimited files: per-seed convergence curves
with the aggregate mean for a run, and mean curves per run for comparisons.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .traces import PHV_FLOOR, Trace


def plot_run(path: str, traces: list[Trace], grid, mean, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for i, trace in enumerate(traces):
        ax.step(trace.costs, np.log10(np.maximum(trace.phv_diff, PHV_FLOOR)),
                where="post", alpha=0.35, lw=1.0,
                label="seeds" if i == 0 else None)
    ax.plot(grid, mean, color="k", lw=2.0, label="mean")
    ax.set_xlabel("total cost consumed")
    ax.set_ylabel("log10 PHV difference")
    if title:
        ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_comparison(path: str, curves: dict[str, tuple], title: str = "") -> None:
    """``curves`` maps a label to ``(grid, mean, var)``."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, (grid, mean, var) in sorted(curves.items()):
        ax.plot(grid, mean, lw=1.8, label=label)
        sd = np.sqrt(var)
        ax.fill_between(grid, mean - sd, mean + sd, alpha=0.15)
    ax.set_xlabel("total cost consumed")
    ax.set_ylabel("log10 PHV difference")
    if title:
        ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
