"""Shared test utilities: independent reference implementations and fixtures."""

from __future__ import annotations

import itertools
import math
from pathlib import Path

import numpy as np
from scipy import ndimage

from sketchseg.raster import BinaryMask, binarize, load_gray, save_gray, save_mask
from sketchseg.synthetic import make_triplet


def zhang_suen_reference(bits: np.ndarray) -> np.ndarray:
    """Textbook Zhang-Suen thinning, pixel by pixel, zero padded."""
    img = np.pad(np.asarray(bits, dtype=np.uint8), 1)
    h, w = img.shape
    changed = True
    while changed:
        changed = False
        for step in (0, 1):
            remove = []
            for r in range(1, h - 1):
                for c in range(1, w - 1):
                    if not img[r, c]:
                        continue
                    p2, p3, p4 = img[r - 1, c], img[r - 1, c + 1], img[r, c + 1]
                    p5, p6, p7 = img[r + 1, c + 1], img[r + 1, c], img[r + 1, c - 1]
                    p8, p9 = img[r, c - 1], img[r - 1, c - 1]
                    ring = [p2, p3, p4, p5, p6, p7, p8, p9, p2]
                    b = sum(ring[:8])
                    a = sum(1 for i in range(8) if ring[i] == 0 and ring[i + 1] == 1)
                    if step == 0:
                        ok = p2 * p4 * p6 == 0 and p4 * p6 * p8 == 0
                    else:
                        ok = p2 * p4 * p8 == 0 and p2 * p6 * p8 == 0
                    if 2 <= b <= 6 and a == 1 and ok:
                        remove.append((r, c))
            for r, c in remove:
                img[r, c] = 0
            changed = changed or bool(remove)
    return img[1:-1, 1:-1]


def brute_force_assignment(cost: np.ndarray) -> tuple[float, tuple[int, ...]]:
    """Minimum mean cost over permutations, independent of the library oracle."""
    n = cost.shape[0]
    best = min(itertools.permutations(range(n)), key=lambda p: sum(cost[i, p[i]] for i in range(n)))
    return sum(cost[i, best[i]] for i in range(n)) / n, best


def bilinear_reference(src: np.ndarray, th: int, tw: int) -> np.ndarray:
    """Scalar half-pixel-centre bilinear resize with edge clamping."""
    h, w = src.shape
    out = np.empty((th, tw))
    for i in range(th):
        y = min(max((i + 0.5) * h / th - 0.5, 0.0), h - 1)
        y0 = int(math.floor(y))
        y1 = min(y0 + 1, h - 1)
        for j in range(tw):
            x = min(max((j + 0.5) * w / tw - 0.5, 0.0), w - 1)
            x0 = int(math.floor(x))
            x1 = min(x0 + 1, w - 1)
            fy, fx = y - y0, x - x0
            out[i, j] = (
                src[y0, x0] * (1 - fy) * (1 - fx)
                + src[y0, x1] * (1 - fy) * fx
                + src[y1, x0] * fy * (1 - fx)
                + src[y1, x1] * fy * fx
            )
    return out


def random_blob(rng: np.random.Generator, size: int = 64) -> np.ndarray:
    """Smoothed-noise blobs: a few thick, irregular components with holes."""
    field = ndimage.gaussian_filter(rng.standard_normal((size, size)), sigma=rng.uniform(2.0, 4.0))
    return field > np.quantile(field, rng.uniform(0.55, 0.8))


def write_corpus(root: Path, n: int, size: int = 256) -> dict[str, Path]:
    """Synthetic image / ground-truth / sketch PNG directories."""
    dirs = {k: root / k for k in ("images", "gt", "sketches")}
    for d in dirs.values():
        d.mkdir(parents=True, exist_ok=True)
    for i in range(n):
        t = make_triplet(i, size=size)
        name = f"sample_{i:03d}.png"
        save_gray(t.image, dirs["images"] / name)
        save_mask(t.gt, dirs["gt"] / name)
        save_gray(t.sketch, dirs["sketches"] / name)
    return dirs


def predictions_from_variants(aug_dir: Path, out_dir: Path, variant: int = 1, grow: int = 2) -> None:
    """Stand-in segmenter: dilate an augmented sketch and fill its interior."""
    out_dir.mkdir(parents=True, exist_ok=True)
    for path in sorted(aug_dir.glob(f"*_v{variant}.png")):
        stroke = binarize(load_gray(path)).as_bool()
        filled = ndimage.binary_fill_holes(ndimage.binary_dilation(stroke, iterations=grow))
        save_mask(BinaryMask(filled), out_dir / (path.name[: -len(f"_v{variant}.png")] + ".png"))


def arc_length_samples(ctrl: np.ndarray, n: int = 20, dense: int = 20001) -> np.ndarray:
    """``n`` points lying exactly on the cubic, spaced evenly by arc length."""
    from sketchseg.bezier import CubicBezier, evaluate

    curve = CubicBezier.from_array(ctrl)
    tt = np.linspace(0.0, 1.0, dense)
    xy = evaluate(curve, tt)
    s = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(xy, axis=0).T))])
    t = np.interp(np.linspace(0.0, s[-1], n), s, tt)
    t[0], t[-1] = 0.0, 1.0
    return evaluate(curve, t)
