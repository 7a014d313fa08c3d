"""PNG figures for energy curves and normalised-energy comparisons."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .evaluation import NormalizedCurve
from .plf import PlConcave


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    FigureCanvasAgg(fig)
    fig.savefig(path, dpi=110)
    return path


def plot_energy_curve(curve: PlConcave, d_image: float, c_image: float, lam_max: float,
                      path, title: str = "") -> Path:
    """Optimal-cut energy against lambda, with the one-region line and the area between them."""
    hi = lam_max if lam_max > 0 else 1.0
    lam = np.union1d(np.linspace(0.0, hi, 200), curve.breakpoints[curve.breakpoints <= hi])
    fig = Figure(figsize=(5.5, 4.0))
    ax = fig.add_subplot()
    value = curve(lam)
    line = d_image + lam * c_image
    ax.plot(lam, value, color="tab:blue", label="optimal cut")
    ax.plot(lam, line, color="tab:gray", linestyle="--", label="single region")
    ax.fill_between(lam, value, line, color="tab:blue", alpha=0.15, label="quality area")
    ax.set_xlabel("lambda")
    ax.set_ylabel("energy")
    if title:
        ax.set_title(title)
    ax.legend(loc="lower right")
    fig.tight_layout()
    return _save(fig, path)


def plot_normalized(curves: dict[str, NormalizedCurve], path, title: str = "") -> Path:
    """Normalised energies on ``[0, 1]`` with the identity and each curve's lower bound."""
    fig = Figure(figsize=(5.5, 4.0))
    ax = fig.add_subplot()
    for name, nc in curves.items():
        (drawn,) = ax.plot(nc.x, nc.value, label=name)
        if nc.lower is not None and len(curves) == 1:
            ax.plot(nc.x, nc.lower, color=drawn.get_color(), linestyle=":", label="lower bound")
    ax.plot([0.0, 1.0], [0.0, 1.0], color="tab:gray", linewidth=0.8, linestyle="--")
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(0.0, 1.05)
    ax.set_xlabel("x = lambda / lambda_max")
    ax.set_ylabel("normalised energy")
    if title:
        ax.set_title(title)
    ax.legend(loc="lower right")
    fig.tight_layout()
    return _save(fig, path)
