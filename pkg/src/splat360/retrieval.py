"""Visibility-weighted color retrieval for volume-branch Gaussians.

Each Gaussian center is projected into every source panorama; the view's
visibility score is the signed meter gap between the Gaussian's camera
distance and the reference depth sampled at the projected pixel (small
means unoccluded, negative means in front of the reference surface —
kept as-is, no clamp). Colors are aggregated with softmax(-score /
temperature) weights and passed through an optional loadable 3x3 head
(identity by default).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gaussians import GaussianCloud
from .geometry import POLAR_EPS, ImageDims, Pose, equirect_project
from .sampling import sample_bilinear

GRAY = (0.5, 0.5, 0.5)  # fully-occluded fallback keeps the decoder default


@dataclass
class SourceView:
    """An RGB panorama with its reference depth prior and camera pose."""

    rgb: np.ndarray        # (H, W, 3) in [0, 1]
    ref_depth: np.ndarray  # (H, W) meters
    pose: Pose
    index: int = 0

    def __post_init__(self) -> None:
        self.rgb = np.asarray(self.rgb, dtype=np.float64)
        self.ref_depth = np.asarray(self.ref_depth, dtype=np.float64)
        if self.rgb.shape[:2] != self.ref_depth.shape:
            raise ValueError("rgb and reference depth dims differ")
        self.dims = ImageDims(self.rgb.shape[1], self.rgb.shape[0])


def _project_into_view(positions: np.ndarray, view: SourceView):
    """Camera distances, sampled colors/depths, and validity per position."""
    p_cam = view.pose.inverse_transform(positions)
    d_g = np.linalg.norm(p_cam, axis=-1)
    valid = p_cam[..., 0] ** 2 + p_cam[..., 2] ** 2 > POLAR_EPS
    uv = np.zeros(positions.shape[:-1] + (2,))
    if np.any(valid):
        uv[valid] = equirect_project(p_cam[valid], view.dims)
    colors = sample_bilinear(view.rgb, uv, wrap_u=True)
    depths = sample_bilinear(view.ref_depth, uv, wrap_u=True)
    return d_g, colors, depths, valid


def visibility_score(position: np.ndarray, view: SourceView) -> float:
    """Signed visibility gap s = d_g - d_o for one Gaussian center (meters).

    Raises ValueError("polar singularity") when the center projects onto
    the view's polar axis; callers treat that view as invisible.
    """
    p = np.asarray(position, dtype=np.float64).reshape(1, 3)
    d_g, _, d_o, valid = _project_into_view(p, view)
    if not valid[0]:
        raise ValueError("polar singularity")
    return float(d_g[0] - d_o[0])


def _retrieval_weights(scores: np.ndarray, valid: np.ndarray,
                       temperature: float) -> np.ndarray:
    """softmax(-s/T) over views, masked to the valid ones; rows sum to 1."""
    logits = np.where(valid, -scores / temperature, -np.inf)
    m = np.max(logits, axis=-1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(logits - m)
    e[~valid] = 0.0
    total = e.sum(axis=-1, keepdims=True)
    return np.where(total > 0, e / np.maximum(total, 1e-300), 0.0)


def retrieve_color(position: np.ndarray, views: list[SourceView],
                   head: np.ndarray | None = None,
                   temperature: float = 1.0) -> np.ndarray:
    """Visibility-weighted color for one Gaussian center.

    With the identity head the result is a convex combination of the
    sampled view colors. Raises ValueError("fully occluded") when no view
    sees the point.
    """
    p = np.asarray(position, dtype=np.float64).reshape(1, 3)
    scores = np.full((1, len(views)), np.inf)
    colors = np.zeros((1, len(views), 3))
    valid = np.zeros((1, len(views)), dtype=bool)
    for vi, view in enumerate(views):
        d_g, c, d_o, ok = _project_into_view(p, view)
        scores[:, vi] = d_g - d_o
        colors[:, vi] = c
        valid[:, vi] = ok
    if not valid.any():
        raise ValueError("fully occluded")
    w = _retrieval_weights(scores, valid, temperature)
    out = np.einsum("nv,nvc->nc", w, colors)[0]
    if head is not None:
        out = np.asarray(head, dtype=np.float64) @ out
    return out


def colorize_cloud(cloud: GaussianCloud, views: list[SourceView],
                   head: np.ndarray | None = None,
                   temperature: float = 1.0,
                   fallback: tuple[float, float, float] = GRAY) -> GaussianCloud:
    """Retrieve colors for every Gaussian; only the color field changes.

    Fully-occluded Gaussians keep the fallback color instead of being
    dropped, preserving the volume branch's completion role.
    """
    if not views:
        raise ValueError("need at least one source view")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    n = len(cloud)
    pos = cloud.positions.astype(np.float64)
    scores = np.empty((n, len(views)))
    colors = np.empty((n, len(views), 3))
    valid = np.empty((n, len(views)), dtype=bool)
    for vi, view in enumerate(views):
        d_g, c, d_o, ok = _project_into_view(pos, view)
        scores[:, vi] = d_g - d_o
        colors[:, vi] = c
        valid[:, vi] = ok

    w = _retrieval_weights(scores, valid, temperature)
    out = np.einsum("nv,nvc->nc", w, colors)
    if head is not None:
        out = out @ np.asarray(head, dtype=np.float64).T
    out[~valid.any(axis=1)] = fallback
    return cloud.replace(colors=np.clip(out, 0.0, 1.0).astype(np.float32))
