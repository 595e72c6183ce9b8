"""The equirectangular panorama image container."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import ImageDims
from . import imgio


@dataclass
class Panorama:
    """RGB + depth + accumulated-alpha equirectangular image.

    rgb: (H, W, 3) float32 in [0, 1]; depth: (H, W) float32 meters with
    0 marking empty pixels; alpha: (H, W) float32 accumulated opacity.
    """

    dims: ImageDims
    rgb: np.ndarray
    depth: np.ndarray
    alpha: np.ndarray

    def __post_init__(self) -> None:
        shape = self.dims.shape
        self.rgb = np.asarray(self.rgb, dtype=np.float32).reshape(shape + (3,))
        self.depth = np.asarray(self.depth, dtype=np.float32).reshape(shape)
        self.alpha = np.asarray(self.alpha, dtype=np.float32).reshape(shape)
        if not np.all(np.isfinite(self.rgb)):
            raise ValueError("non-finite rgb values")
        if self.rgb.min() < 0 or self.rgb.max() > 1:
            raise ValueError("rgb must lie in [0, 1]")
        if self.depth.min() < 0:
            raise ValueError("depth must be non-negative")

    @staticmethod
    def from_rgb(rgb: np.ndarray, depth: np.ndarray | None = None) -> "Panorama":
        rgb = np.asarray(rgb)
        h, w = rgb.shape[:2]
        dims = ImageDims(w, h)
        if depth is None:
            depth = np.zeros((h, w), dtype=np.float32)
        return Panorama(dims, rgb, depth, np.zeros((h, w), dtype=np.float32))

    def save(self, stem: str | Path, png: bool = True, exr: bool = True) -> list[Path]:
        """Write <stem>.png, <stem>.exr (RGB) and <stem>_depth.exr; returns paths."""
        stem = Path(stem)
        written = []
        if png:
            p = stem.with_suffix(".png")
            imgio.write_png(p, self.rgb)
            written.append(p)
        if exr:
            p = stem.with_suffix(".exr")
            imgio.write_exr(p, self.rgb)
            written.append(p)
            d = stem.parent / (stem.name + "_depth.exr")
            imgio.write_exr(d, self.depth)
            written.append(d)
        return written
