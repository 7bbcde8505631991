"""Report figures. Figures are built without pyplot so rendering is thread safe,
and PNGs carry no software/version metadata so reruns are byte-identical."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

__all__ = ["save_figure", "scale_analysis_figure", "eval_figure"]

_PNG_META = {"Software": None}


def _new_figure(width: float = 6.0, height: float = 4.0) -> Figure:
    fig = Figure(figsize=(width, height), dpi=100)
    FigureCanvasAgg(fig)
    return fig


def save_figure(fig: Figure, path: str | Path) -> Path:
    path = Path(path)
    fig.savefig(path, format="png", metadata=_PNG_META)
    return path


def scale_analysis_figure(
    raw: np.ndarray, binned: np.ndarray, curve: np.ndarray, bin_size: int, frac: float
) -> Figure:
    """Scatter of IoU against target size with the fitted LOWESS curve."""
    fig = _new_figure()
    ax = fig.add_subplot(1, 1, 1)
    if len(raw):
        ax.scatter(raw[:, 0], raw[:, 1], s=8, color="0.75", label="all samples")
    if len(binned):
        ax.scatter(binned[:, 0], binned[:, 1], s=14, color="tab:blue", label=f"binned (width {bin_size})")
    if len(curve):
        ax.plot(curve[:, 0], curve[:, 1], color="tab:red", lw=2, label=f"LOWESS (frac {frac:g})")
    ax.set_xlabel("target size (pixels)")
    ax.set_ylabel("IoU")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    return fig


def eval_figure(ious: Sequence[float], p_at: Mapping[float, float]) -> Figure:
    """IoU histogram next to the precision-at-threshold bars."""
    fig = _new_figure(8.0, 3.5)
    ax1, ax2 = fig.subplots(1, 2)
    ax1.hist(np.asarray(ious, dtype=float), bins=np.linspace(0, 1, 21), color="tab:blue", edgecolor="white")
    ax1.set_xlabel("IoU")
    ax1.set_ylabel("samples")

    xs = sorted(p_at)
    ax2.bar([f"{x:.1f}" for x in xs], [p_at[x] for x in xs], color="tab:orange")
    ax2.set_xlabel("threshold X")
    ax2.set_ylabel("P@X (%)")
    ax2.set_ylim(0, 100)
    fig.tight_layout()
    return fig
