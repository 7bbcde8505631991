"""Pixel grids, PNG I/O and binarization.

Both containers wrap a read-only ``(height, width)`` numpy array in row-major
order. Coordinates elsewhere in the package use ``(x, y)`` = ``(column, row)``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import UnsupportedFormat

__all__ = ["GrayRaster", "BinaryMask", "load_gray", "binarize", "save_mask", "save_gray"]


def _frozen(array: np.ndarray, dtype) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True, order="C")
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class GrayRaster:
    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"raster must be a non-empty 2D grid, got shape {arr.shape}")
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise ValueError("intensities must lie in [0, 255]")
        object.__setattr__(self, "pixels", _frozen(arr, np.uint8))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    def __eq__(self, other):
        if not isinstance(other, GrayRaster):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True, eq=False)
class BinaryMask:
    bits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.bits)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"mask must be a non-empty 2D grid, got shape {arr.shape}")
        if arr.dtype != bool and not np.isin(arr, (0, 1)).all():
            raise ValueError("mask entries must be exactly 0 or 1")
        object.__setattr__(self, "bits", _frozen(arr, np.uint8))

    @classmethod
    def zeros(cls, height: int, width: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=np.uint8))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    def as_bool(self) -> np.ndarray:
        return self.bits.astype(bool)

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)


def _luma(rgb: np.ndarray) -> np.ndarray:
    # integer 0.299/0.587/0.114 weights, rounded half-up
    r, g, b = (rgb[..., i].astype(np.int64) for i in range(3))
    return ((299 * r + 587 * g + 114 * b + 500) // 1000).astype(np.uint8)


def load_gray(path: str | os.PathLike) -> GrayRaster:
    """Read an 8-bit grayscale or RGB PNG. RGB is reduced with integer luma.

    Raises:
        FileNotFoundError: if ``path`` does not exist.
        UnsupportedFormat: for non-PNG files, >8-bit depth, or alpha channels.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    try:
        img = Image.open(path)
        img.load()
    except UnidentifiedImageError as exc:
        raise UnsupportedFormat(f"{path}: not a readable image") from exc
    with img:
        if img.format != "PNG":
            raise UnsupportedFormat(f"{path}: expected PNG, got {img.format}")
        mode = img.mode
        if mode == "P":
            if "transparency" in img.info:
                raise UnsupportedFormat(f"{path}: palette with alpha is not supported")
            img = img.convert("RGB")
            mode = "RGB"
        if mode == "1":
            arr = np.asarray(img.convert("L"))
        elif mode == "L":
            arr = np.asarray(img)
        elif mode == "RGB":
            arr = _luma(np.asarray(img))
        else:
            # I;16, I, F, RGBA, LA, ...
            raise UnsupportedFormat(f"{path}: unsupported PNG mode {mode!r}")
    return GrayRaster(arr)


def binarize(img: GrayRaster, threshold: int = 128) -> BinaryMask:
    """Foreground is every pixel with intensity >= ``threshold``."""
    return BinaryMask(img.pixels >= threshold)


def save_mask(mask: BinaryMask, path: str | os.PathLike) -> None:
    """Write ``mask`` as an 8-bit grayscale PNG (0 -> 0, 1 -> 255)."""
    save_gray(GrayRaster(mask.bits * np.uint8(255)), path)


def save_gray(img: GrayRaster, path: str | os.PathLike) -> None:
    if not os.fspath(path):
        raise OSError("empty output path")
    Image.fromarray(np.ascontiguousarray(img.pixels)).save(path, format="PNG")
