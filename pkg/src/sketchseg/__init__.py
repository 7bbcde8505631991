"""Sketch-prompted segmentation toolkit: stroke augmentation, multi-prompt
optimal transport, masked attention, focal loss and evaluation metrics."""

__version__ = "0.1.0"

from .errors import SketchSegError  # noqa: E402

__all__ = ["SketchSegError", "__version__"]
