"""Sketch augmentation by Bezier pivot deformation.

binarize -> skeletonize -> block tiling -> per-component cubic fit ->
perturb interior control points -> render -> union per variant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bezier import CubicBezier, PerturbParams, displacement_magnitude, draw, fit, perturb, sample_component
from .errors import DimensionMismatch, EmptySketch
from .raster import BinaryMask, GrayRaster, binarize
from .skeleton import connected_components, partition_blocks, skeletonize

__all__ = ["AugmentConfig", "FittedStroke", "fit_strokes", "augment_sketch", "variant_distortion"]


@dataclass(frozen=True)
class AugmentConfig:
    perturb: PerturbParams
    binarize_threshold: int = 128
    block_size: int = 32
    min_component_pixels: int = 10
    sample_interval: int = 10
    render_thickness: int = 3

    def __post_init__(self):
        for name in ("block_size", "min_component_pixels", "sample_interval", "render_thickness"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0 <= self.binarize_threshold <= 255:
            raise ValueError("binarize_threshold must lie in [0, 255]")

    @classmethod
    def with_seed(cls, seed: int, **kwargs) -> "AugmentConfig":
        perturb_keys = {"C", "K_step", "num_variants"}
        p = {k: kwargs.pop(k) for k in list(kwargs) if k in perturb_keys}
        return cls(perturb=PerturbParams(seed=seed, **p), **kwargs)


@dataclass(frozen=True)
class FittedStroke:
    block_index: int
    curve: CubicBezier
    row_count: int
    theta: float


def _as_mask(sketch: GrayRaster | BinaryMask, threshold: int) -> BinaryMask:
    if isinstance(sketch, BinaryMask):
        return sketch
    return binarize(sketch, threshold)


def fit_strokes(skeleton: BinaryMask, config: AugmentConfig) -> list[FittedStroke]:
    """Fit one cubic per qualifying component of every block, in block order."""
    strokes = []
    grid = partition_blocks(skeleton, config.block_size)
    for bi, (ox, oy, w, h) in enumerate(grid):
        block = BinaryMask(skeleton.bits[oy : oy + h, ox : ox + w])
        for comp in connected_components(block):
            if comp.size < config.min_component_pixels:
                continue
            comp = comp.translated(ox, oy)
            curve = fit(sample_component(comp, config.sample_interval))
            theta = displacement_magnitude(comp.row_count, config.perturb)
            strokes.append(FittedStroke(bi, curve, comp.row_count, theta))
    return strokes


def _stream(seed: int, block_index: int, variant: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, block_index, variant]))


def augment_sketch(sketch: GrayRaster | BinaryMask, config: AugmentConfig) -> list[BinaryMask]:
    """Return ``num_variants`` perturbed re-renderings of ``sketch``.

    Each (block, variant) pair draws from its own stream seeded by
    ``(seed, block index, variant index)``; components inside a block consume
    that stream in their deterministic order. Blocks without a qualifying
    component contribute nothing to the variants.

    Raises:
        EmptySketch: the sketch has no foreground after binarization.
        InvalidBlockSize: ``block_size`` below 8.
    """
    mask = _as_mask(sketch, config.binarize_threshold)
    if mask.count == 0:
        raise EmptySketch("sketch has no foreground pixels")
    partition_blocks(mask, config.block_size)  # validates block size up front
    strokes = fit_strokes(skeletonize(mask), config)
    params = config.perturb

    variants = []
    for v in range(params.num_variants):
        canvas = np.zeros(mask.shape, dtype=np.uint8)
        rng, current = None, None
        for stroke in strokes:
            if stroke.block_index != current:
                current = stroke.block_index
                rng = _stream(params.seed, current, v)
            curve = perturb(stroke.curve, stroke.theta, rng)
            draw(curve, canvas, config.render_thickness)
        variants.append(BinaryMask(canvas))
    return variants


def variant_distortion(original: BinaryMask, variant: BinaryMask) -> float:
    """IoU between two masks; 1.0 when both are empty."""
    if original.shape != variant.shape:
        raise DimensionMismatch(f"{original.shape} vs {variant.shape}")
    a, b = original.as_bool(), variant.as_bool()
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union
