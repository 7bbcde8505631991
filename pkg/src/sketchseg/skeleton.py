"""Thinning, 8-connected labeling and block tiling of binary sketches."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import InvalidBlockSize
from .raster import BinaryMask

__all__ = [
    "PixelComponent",
    "BlockGrid",
    "skeletonize",
    "connected_components",
    "partition_blocks",
    "MIN_BLOCK_SIZE",
]

MIN_BLOCK_SIZE = 8
EIGHT = np.ones((3, 3), dtype=bool)


def _neighbours(p: np.ndarray):
    """P2..P9 (clockwise from north) for the interior of a zero-padded array."""
    return (
        p[:-2, 1:-1],  # P2  N
        p[:-2, 2:],  # P3  NE
        p[1:-1, 2:],  # P4  E
        p[2:, 2:],  # P5  SE
        p[2:, 1:-1],  # P6  S
        p[2:, :-2],  # P7  SW
        p[1:-1, :-2],  # P8  W
        p[:-2, :-2],  # P9  NW
    )


def _candidates(padded: np.ndarray, step: int) -> np.ndarray:
    n = _neighbours(padded)
    P2, P3, P4, P5, P6, P7, P8, P9 = n
    b = sum(x.astype(np.int8) for x in n)
    ring = n + (P2,)
    a = sum((~ring[i] & ring[i + 1]).astype(np.int8) for i in range(8))
    if step == 0:
        directional = ~(P2 & P4 & P6) & ~(P4 & P6 & P8)
    else:
        directional = ~(P2 & P4 & P8) & ~(P2 & P6 & P8)
    return padded[1:-1, 1:-1] & (b >= 2) & (b <= 6) & (a == 1) & directional


def _deletable(padded: np.ndarray, r: int, c: int, step: int) -> bool:
    # r, c index the padded array
    P2, P3, P4 = padded[r - 1, c], padded[r - 1, c + 1], padded[r, c + 1]
    P5, P6, P7 = padded[r + 1, c + 1], padded[r + 1, c], padded[r + 1, c - 1]
    P8, P9 = padded[r, c - 1], padded[r - 1, c - 1]
    ring = (P2, P3, P4, P5, P6, P7, P8, P9, P2)
    b = sum(ring[:8])
    if not 2 <= b <= 6:
        return False
    if sum(1 for i in range(8) if not ring[i] and ring[i + 1]) != 1:
        return False
    if step == 0:
        return not (P2 and P4 and P6) and not (P4 and P6 and P8)
    return not (P2 and P4 and P8) and not (P2 and P6 and P8)


def _same_topology(before: np.ndarray, after: np.ndarray) -> bool:
    old, n_old = ndimage.label(before, structure=EIGHT)
    new, n_new = ndimage.label(after, structure=EIGHT)
    if n_old != n_new:
        return False
    if n_new == 0:
        return True
    # every surviving component sits inside exactly one old component
    first = ndimage.minimum_position(new, new, index=np.arange(1, n_new + 1))
    parents = {int(old[pos]) for pos in first}
    return len(parents) == n_old


def skeletonize(mask: BinaryMask) -> BinaryMask:
    """Zhang-Suen two-subiteration thinning with zero padding at the border.

    Each subiteration deletes its candidates in parallel, as in the original
    algorithm. If that parallel deletion would split or erase an 8-connected
    component (the 2x2 square case, over-eroded diagonals), the subiteration
    is replayed sequentially in row-major order, rechecking each candidate
    against the current image, which never changes topology.
    """
    padded = np.pad(mask.as_bool(), 1)
    changed = True
    while changed:
        changed = False
        for step in (0, 1):
            cand = _candidates(padded, step)
            if not cand.any():
                continue
            inner = padded[1:-1, 1:-1]
            trial = inner & ~cand
            if _same_topology(inner, trial):
                padded[1:-1, 1:-1] = trial
            else:
                for r, c in np.argwhere(cand):
                    if _deletable(padded, r + 1, c + 1, step):
                        padded[r + 1, c + 1] = False
            changed = True
    return BinaryMask(padded[1:-1, 1:-1])


@dataclass(frozen=True, eq=False)
class PixelComponent:
    """One 8-connected foreground set. ``pixels`` is an ``(N, 2)`` array of (x, y)."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels, dtype=np.int64).reshape(-1, 2)
        if len(arr) == 0:
            raise ValueError("component must contain at least one pixel")
        arr = arr[np.lexsort((arr[:, 0], arr[:, 1]))]
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @property
    def size(self) -> int:
        return len(self.pixels)

    def __len__(self) -> int:
        return len(self.pixels)

    @property
    def bounding_box(self) -> tuple[int, int, int, int]:
        xs, ys = self.pixels[:, 0], self.pixels[:, 1]
        return int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())

    @property
    def row_count(self) -> int:
        """Number of image rows the component spans."""
        _, y0, _, y1 = self.bounding_box
        return y1 - y0 + 1

    def translated(self, dx: int, dy: int) -> "PixelComponent":
        return PixelComponent(self.pixels + np.array([dx, dy]))


def connected_components(mask: BinaryMask) -> list[PixelComponent]:
    """8-connected components ordered by their first row-major pixel."""
    labels, n = ndimage.label(mask.bits, structure=EIGHT)
    if n == 0:
        return []
    rows, cols = np.nonzero(labels)  # row-major order
    lab = labels[rows, cols]
    comps = []
    for k in range(1, n + 1):
        sel = lab == k
        comps.append(PixelComponent(np.column_stack((cols[sel], rows[sel]))))
    comps.sort(key=lambda c: (int(c.pixels[0, 1]), int(c.pixels[0, 0])))
    return comps


@dataclass(frozen=True)
class BlockGrid:
    block_size: int
    blocks: tuple[tuple[int, int, int, int], ...]  # (origin_x, origin_y, w, h)

    def __len__(self) -> int:
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)


def partition_blocks(mask: BinaryMask, block_size: int = 32) -> BlockGrid:
    """Tile the mask with non-overlapping squares; edge blocks may be smaller."""
    if block_size < MIN_BLOCK_SIZE:
        raise InvalidBlockSize(f"block_size must be >= {MIN_BLOCK_SIZE}, got {block_size}")
    blocks = []
    for oy in range(0, mask.height, block_size):
        for ox in range(0, mask.width, block_size):
            w = min(block_size, mask.width - ox)
            h = min(block_size, mask.height - oy)
            blocks.append((ox, oy, w, h))
    return BlockGrid(block_size, tuple(blocks))
