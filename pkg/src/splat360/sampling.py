"""Bilinear image sampling with panoramic horizontal wrap.

Pixel (i, j) is centered at continuous coordinates (i + 0.5, j + 0.5);
sampling at a pixel center returns that pixel exactly. The u axis wraps
modulo the width when wrap_u is set (equirectangular convention), v is
clamped to the valid rows either way.
"""

from __future__ import annotations

import numpy as np


def sample_bilinear(image: np.ndarray, uv: np.ndarray, wrap_u: bool = True) -> np.ndarray:
    """Sample image (H, W) or (H, W, C) at continuous pixel coords (..., 2).

    Returns shape (...,) for 2-D images and (..., C) otherwise.
    """
    img = np.asarray(image)
    h, w = img.shape[:2]
    uv = np.asarray(uv, dtype=np.float64)
    fu = uv[..., 0] - 0.5
    fv = uv[..., 1] - 0.5

    u0 = np.floor(fu).astype(np.int64)
    v0 = np.floor(fv).astype(np.int64)
    a = fu - u0
    b = fv - v0
    u1 = u0 + 1
    v1 = np.clip(v0 + 1, 0, h - 1)
    v0 = np.clip(v0, 0, h - 1)
    if wrap_u:
        u0 %= w
        u1 %= w
    else:
        u0 = np.clip(u0, 0, w - 1)
        u1 = np.clip(u1, 0, w - 1)

    if img.ndim > 2:
        a = a[..., None]
        b = b[..., None]
    return ((1 - a) * (1 - b) * img[v0, u0] + a * (1 - b) * img[v0, u1]
            + (1 - a) * b * img[v1, u0] + a * b * img[v1, u1])
