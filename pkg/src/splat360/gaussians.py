"""The 3D Gaussian primitive and cloud-level operations.

Clouds are immutable struct-of-arrays (float32, the de facto splatting
precision); every operation returns a new cloud. Frames are tagged with
a free-form string ("world", "cam:0", ...) and concatenation requires
matching tags.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import POLAR_EPS, ImageDims, Pose, equirect_project, quat_to_rotmat
from .sampling import sample_bilinear

SCALE_MIN = 1e-6
SCALE_MAX = 1e3


@dataclass(frozen=True)
class Gaussian:
    """A single anisotropic Gaussian primitive.

    position: (3,) meters; scale: (3,) per-axis standard deviations in
    (SCALE_MIN, SCALE_MAX); rotation: unit quaternion (w, x, y, z);
    opacity and color components in [0, 1].
    """

    position: np.ndarray
    scale: np.ndarray
    rotation: np.ndarray
    opacity: float
    color: np.ndarray


class GaussianCloud:
    """An ordered, frame-tagged collection of Gaussians (struct of arrays)."""

    def __init__(
        self,
        positions: np.ndarray,
        scales: np.ndarray,
        rotations: np.ndarray,
        opacities: np.ndarray,
        colors: np.ndarray,
        frame: str = "world",
        labels: list[str] | None = None,
        validate: bool = True,
    ) -> None:
        self.positions = np.ascontiguousarray(positions, dtype=np.float32).reshape(-1, 3)
        n = len(self.positions)
        self.scales = np.ascontiguousarray(scales, dtype=np.float32).reshape(n, 3)
        self.rotations = np.ascontiguousarray(rotations, dtype=np.float32).reshape(n, 4)
        self.opacities = np.ascontiguousarray(opacities, dtype=np.float32).reshape(n)
        self.colors = np.ascontiguousarray(colors, dtype=np.float32).reshape(n, 3)
        self.frame = frame
        self.labels = list(labels) if labels is not None else None
        if self.labels is not None and len(self.labels) != n:
            raise ValueError("labels length does not match cloud size")
        if validate:
            self._validate()

    def _validate(self) -> None:
        for name in ("positions", "scales", "rotations", "opacities", "colors"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite values in {name}")
        if len(self) and (self.scales.min() < SCALE_MIN or self.scales.max() > SCALE_MAX):
            raise ValueError(f"scales must lie in [{SCALE_MIN}, {SCALE_MAX}] m")
        if len(self) and np.abs(np.linalg.norm(self.rotations, axis=1) - 1.0).max() > 1e-6:
            raise ValueError("quaternions must be unit norm (within 1e-6)")
        if len(self) and (self.opacities.min() < 0 or self.opacities.max() > 1):
            raise ValueError("opacities must lie in [0, 1]")
        if len(self) and (self.colors.min() < 0 or self.colors.max() > 1):
            raise ValueError("colors must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.positions)

    def __getitem__(self, i: int) -> Gaussian:
        return Gaussian(self.positions[i].copy(), self.scales[i].copy(),
                        self.rotations[i].copy(), float(self.opacities[i]),
                        self.colors[i].copy())

    def select(self, mask_or_index: np.ndarray) -> "GaussianCloud":
        """A new cloud restricted to a boolean mask or index array, order kept."""
        idx = np.arange(len(self))[mask_or_index]
        labels = [self.labels[i] for i in idx] if self.labels is not None else None
        return GaussianCloud(self.positions[idx], self.scales[idx], self.rotations[idx],
                             self.opacities[idx], self.colors[idx], self.frame, labels,
                             validate=False)

    def replace(self, **arrays) -> "GaussianCloud":
        """A copy with the named arrays swapped out."""
        kw = dict(positions=self.positions, scales=self.scales, rotations=self.rotations,
                  opacities=self.opacities, colors=self.colors, frame=self.frame,
                  labels=self.labels)
        kw.update(arrays)
        return GaussianCloud(**kw)

    @staticmethod
    def empty(frame: str = "world") -> "GaussianCloud":
        z = np.zeros((0, 3), dtype=np.float32)
        return GaussianCloud(z, z, np.zeros((0, 4), np.float32), np.zeros(0, np.float32),
                             z, frame)

    @staticmethod
    def from_gaussians(gaussians: list[Gaussian], frame: str = "world") -> "GaussianCloud":
        if not gaussians:
            return GaussianCloud.empty(frame)
        return GaussianCloud(
            np.stack([g.position for g in gaussians]),
            np.stack([g.scale for g in gaussians]),
            np.stack([g.rotation for g in gaussians]),
            np.array([g.opacity for g in gaussians]),
            np.stack([g.color for g in gaussians]),
            frame,
        )

    def covariances(self) -> np.ndarray:
        """Per-Gaussian 3x3 covariances R diag(S^2) R^T, float64, shape (N, 3, 3)."""
        return covariance(self.scales, self.rotations)


def covariance(scale: np.ndarray, rotation: np.ndarray) -> np.ndarray:
    """Covariance(s) R diag(S^2) R^T from scales (..., 3) and quaternions (..., 4)."""
    s = np.asarray(scale, dtype=np.float64)
    R = quat_to_rotmat(rotation)
    return np.einsum("...ij,...j,...kj->...ik", R, s * s, R)


def concat(a: GaussianCloud, b: GaussianCloud) -> GaussianCloud:
    """Concatenate two frame-compatible clouds, a's Gaussians first."""
    if a.frame != b.frame:
        raise ValueError(f"frame mismatch: {a.frame!r} vs {b.frame!r}")
    if a.labels is None and b.labels is None:
        labels = None
    else:
        labels = (a.labels or [""] * len(a)) + (b.labels or [""] * len(b))
    return GaussianCloud(
        np.concatenate([a.positions, b.positions]),
        np.concatenate([a.scales, b.scales]),
        np.concatenate([a.rotations, b.rotations]),
        np.concatenate([a.opacities, b.opacities]),
        np.concatenate([a.colors, b.colors]),
        a.frame, labels, validate=False,
    )


def depth_prune(
    cloud: GaussianCloud,
    depth_maps: list[np.ndarray],
    poses: list[Pose],
    dims: ImageDims,
    deviation_threshold: float = 0.5,
    opacity_factor: float = 0.1,
    opacity_floor: float = 1.0 / 255.0,
) -> GaussianCloud:
    """Down-weight and prune Gaussians unsupported by the reference depths.

    A view confirms a Gaussian when its center projects there (away from
    the pole guard), the sampled reference depth is nonzero, and the
    camera distance deviates from it by at most deviation_threshold.
    Gaussians confirmed by no view get opacity scaled by opacity_factor;
    anything left below opacity_floor is removed. Confirmed Gaussians are
    returned byte-identical.
    """
    if len(depth_maps) != len(poses):
        raise ValueError("need exactly one depth map per pose")
    if deviation_threshold <= 0:
        raise ValueError("deviation threshold must be positive")
    for dm in depth_maps:
        if dm.shape != dims.shape:
            raise ValueError(f"depth map shape {dm.shape} does not match dims {dims.shape}")

    confirmed = np.zeros(len(cloud), dtype=bool)
    pos = cloud.positions.astype(np.float64)
    for dm, pose in zip(depth_maps, poses):
        p_cam = pose.inverse_transform(pos)
        d_g = np.linalg.norm(p_cam, axis=1)
        valid = p_cam[:, 0] ** 2 + p_cam[:, 2] ** 2 > POLAR_EPS
        if not np.any(valid):
            continue
        uv = equirect_project(p_cam[valid], dims)
        d_o = sample_bilinear(np.asarray(dm, dtype=np.float64), uv, wrap_u=True)
        dev_ok = (d_o > 0) & (np.abs(d_g[valid] - d_o) <= deviation_threshold)
        confirmed[np.flatnonzero(valid)[dev_ok]] = True

    opac = cloud.opacities.copy()
    opac[~confirmed] = (opac[~confirmed].astype(np.float64) * opacity_factor).astype(np.float32)
    out = cloud.replace(opacities=opac)
    return out.select(opac >= opacity_floor)
