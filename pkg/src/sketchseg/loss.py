"""Focal loss for score maps supervised by a binary ground-truth mask."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, DomainError, EmptyInput
from .raster import BinaryMask

__all__ = ["FocalConfig", "focal_loss", "focal_loss_map", "batch_focal_loss"]


@dataclass(frozen=True)
class FocalConfig:
    alpha: float = 0.25
    gamma: float = 2.0
    clamp_eps: float = 1e-7

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.gamma >= 0.0:
            raise ValueError(f"gamma must be nonnegative, got {self.gamma}")
        if not 0.0 < self.clamp_eps < 0.5:
            raise ValueError("clamp_eps must lie in (0, 0.5)")


def _target(T: BinaryMask | np.ndarray) -> np.ndarray:
    if isinstance(T, BinaryMask):
        return T.bits.astype(float)
    t = np.asarray(T, dtype=float)
    if not np.all((t == 0) | (t == 1)):
        raise DomainError("targets must be 0 or 1")
    return t


def focal_loss_map(Y: np.ndarray, T: BinaryMask | np.ndarray, cfg: FocalConfig) -> np.ndarray:
    """Per-pixel focal terms ``alpha_t * CE * (1 - p_t) ** gamma`` for a 2D map."""
    y = np.asarray(Y, dtype=float)
    t = _target(T)
    if y.shape != t.shape:
        raise DimensionMismatch(f"predictions {y.shape} vs targets {t.shape}")
    if not np.all((y >= 0.0) & (y <= 1.0)):
        raise DomainError("predictions must lie in [0, 1]")
    # For binary t, -[t log y + (1-t) log(1-y)] = -log p_t. Clamping p_t
    # rather than y treats y and 1-y alike, so the loss is symmetric under
    # (y, t, alpha) -> (1-y, 1-t, 1-alpha) even at the clamp.
    p_t = np.clip(y * t + (1.0 - y) * (1.0 - t), cfg.clamp_eps, 1.0 - cfg.clamp_eps)
    ce = -np.log(p_t)
    alpha_t = cfg.alpha * t + (1.0 - cfg.alpha) * (1.0 - t)
    return alpha_t * ce * (1.0 - p_t) ** cfg.gamma


def focal_loss(Y: np.ndarray, T: BinaryMask | np.ndarray, cfg: FocalConfig = FocalConfig()) -> float:
    """Mean focal loss over all pixels.

    ``Y`` is either ``(H, W)`` or ``(H, W, K)``; in the latter case every
    channel is scored against the same target and the channel losses are
    averaged.
    """
    y = np.asarray(Y, dtype=float)
    t = _target(T)
    if y.ndim == t.ndim + 1:
        if y.shape[:2] != t.shape:
            raise DimensionMismatch(f"predictions {y.shape} vs targets {t.shape}")
        return float(np.mean([focal_loss_map(y[..., k], t, cfg).mean() for k in range(y.shape[-1])]))
    return float(focal_loss_map(y, t, cfg).mean())


def batch_focal_loss(
    Ys: Sequence[np.ndarray], Ts: Sequence[BinaryMask | np.ndarray], cfg: FocalConfig = FocalConfig()
) -> float:
    """Mean of per-sample losses."""
    if len(Ys) != len(Ts):
        raise DimensionMismatch(f"{len(Ys)} predictions but {len(Ts)} targets")
    if not Ys:
        raise EmptyInput("empty batch")
    return float(np.mean([focal_loss(y, t, cfg) for y, t in zip(Ys, Ts)]))
