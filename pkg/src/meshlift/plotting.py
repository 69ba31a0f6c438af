"""Figures for the report command: per-iteration curves written to files."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.color": "0.85",
    "lines.linewidth": 1.0,
    "lines.markersize": 4,
    "savefig.dpi": 150,
}

MARKERS = ("s", "o", "^", "v", "D", "x")


def figure_size(scale=1.0):
    width = 3.5 * scale
    golden = (math.sqrt(5.0) - 1.0) / 2.0
    return (width, width * golden)


def plot_curves(curves: Mapping[str, Sequence[float]], path, ylabel: str,
                xlabel: str = "Iteration") -> Path:
    """One line per method; constant curves (no compensation) are dashed."""
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figure_size(1.3))
        marker = 0
        for label, ys in curves.items():
            ys = list(ys)
            xs = range(1, len(ys) + 1)
            if len(set(ys)) <= 1:
                ax.plot(xs, ys, linestyle="--", color="0.4", label=label)
            else:
                ax.plot(xs, ys, marker=MARKERS[marker % len(MARKERS)], markevery=max(1, len(ys) // 10),
                        label=label)
                marker += 1
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.legend(frameon=True)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path
