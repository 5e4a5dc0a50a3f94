"""Static figures for the report command (Agg backend, column-width style)."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

golden_mean = (np.sqrt(5) - 1.0) / 2.0
fig_width = 3.4
fig_size = [fig_width, fig_width * golden_mean]
colors = ["#08589e", "#2b8cbe", "#4eb3d3", "#7bccc4", "#a8ddb5"]

params = {
    "axes.prop_cycle": matplotlib.cycler(color=colors),
    "axes.labelsize": 9,
    "font.family": "serif",
    "font.size": 8,
    "mathtext.fontset": "stix",
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.figsize": fig_size,
    "figure.dpi": 150,
    "lines.linewidth": 1,
    "lines.markersize": 3,
    "figure.subplot.left": 0.18,
    "figure.subplot.bottom": 0.20,
    "figure.subplot.right": 0.95,
    "figure.subplot.top": 0.92,
    # reproducible PNG bytes
    "svg.hashsalt": "kinvfp",
}


def read_columns(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return {}
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}


def line_figure(path: str | Path, x: np.ndarray, series: dict[str, np.ndarray], xlabel: str, ylabel: str, logy: bool = False) -> None:
    """One panel, one line per series; non-positive values are dropped on log axes."""
    with plt.rc_context(params):
        fig, ax = plt.subplots()
        for name, y in series.items():
            mask = np.isfinite(y) & ((y > 0) if logy else True)
            if mask.any():
                ax.plot(x[mask], y[mask], marker="o" if mask.sum() < 20 else None, label=name)
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if series:
            ax.legend(frameon=False)
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)


def field_figure(path: str | Path, x: np.ndarray, u: np.ndarray, values: np.ndarray, label: str) -> None:
    with plt.rc_context(params):
        fig, ax = plt.subplots()
        im = ax.pcolormesh(x, u, values.T, shading="auto", cmap="viridis")
        fig.colorbar(im, ax=ax, label=label)
        ax.set_xlabel("$x$")
        ax.set_ylabel("$u$")
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)
