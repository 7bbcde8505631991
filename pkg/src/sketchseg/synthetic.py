"""Seeded synthetic (image, ground truth, sketch) triplets for demos and tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image, ImageDraw

from .raster import BinaryMask, GrayRaster

__all__ = ["Triplet", "make_triplet"]


@dataclass(frozen=True)
class Triplet:
    image: GrayRaster
    gt: BinaryMask
    sketch: GrayRaster  # white strokes on black


def _outline(rng: np.random.Generator, size: int, n: int = 96) -> np.ndarray:
    cx, cy = rng.uniform(0.35, 0.65, 2) * size
    radius = rng.uniform(0.12, 0.3) * size
    phi = np.linspace(0, 2 * np.pi, n, endpoint=False)
    r = np.ones(n)
    for k in range(2, 5):
        r += rng.uniform(0, 0.15) * np.cos(k * phi + rng.uniform(0, 2 * np.pi))
    return np.column_stack((cx + radius * r * np.cos(phi), cy + radius * r * np.sin(phi)))


def make_triplet(seed: int, size: int = 256, stroke_width: int = 3, jitter: float = 2.0) -> Triplet:
    """A blob-shaped target, a textured image and a loose hand-drawn outline."""
    rng = np.random.default_rng(seed)
    poly = _outline(rng, size)

    gt_img = Image.new("L", (size, size), 0)
    ImageDraw.Draw(gt_img).polygon([tuple(p) for p in poly], fill=1)
    gt = np.asarray(gt_img)

    yy, xx = np.mgrid[0:size, 0:size] / size
    background = 60 + 40 * xx + 20 * np.sin(6 * yy + rng.uniform(0, 6))
    image = np.where(gt == 1, 170.0, background) + rng.normal(0, 12, (size, size))

    # the drawn outline wanders a little off the true boundary
    wobble = np.cumsum(rng.normal(0, jitter / 4, poly.shape), axis=0)
    wobble -= np.linspace(0, 1, len(poly))[:, None] * wobble[-1]
    drawn = poly + wobble + rng.normal(0, jitter / 2, 2)
    sk_img = Image.new("L", (size, size), 0)
    pts = [tuple(p) for p in np.vstack([drawn, drawn[:1]])]
    ImageDraw.Draw(sk_img).line(pts, fill=255, width=stroke_width, joint="curve")

    return Triplet(
        image=GrayRaster(np.clip(np.rint(image), 0, 255)),
        gt=BinaryMask(gt),
        sketch=GrayRaster(np.asarray(sk_img)),
    )
