"""Cylindrical triplane: storage, point initialization, attention, decoding.

The field factorizes a camera-centered cylindrical volume (radius R0,
height 2*Z0, full azimuth) into three feature planes:

    theta_z  (n_theta, n_z, D)    r_theta  (n_r, n_theta, D)
    z_r      (n_z, n_r, D)

The theta axis is logically circular: index n_theta wraps to 0 in all
addressing, which is what makes renders seamless at u = 0/W. Cells are
indexed (i, j, k) = (theta, z, r) with centers at (idx + 0.5) * cell
extent; z spans [-Z0, +Z0] around the camera height.

Attention passes are residual (output = input + projected attention
term) with bias-free linear maps, so a zero value projection is an exact
identity. All randomness is injected through seeded parameter factories;
nothing here is trained.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .gaussians import SCALE_MAX, SCALE_MIN, GaussianCloud
from .geometry import (POLAR_EPS, ImageDims, Pose, cart_to_cyl, cyl_jacobian,
                       cyl_to_cart, equirect_project, transform_scale)
from .sampling import sample_bilinear
from .weights import load_tensors, save_tensors

_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class TriplaneConfig:
    """Grid bounds and resolutions; defaults give an 11264-cell field."""

    radius: float = 10.0       # R0, meters
    half_height: float = 5.0   # Z0, meters (total height 2*Z0)
    n_r: int = 16
    n_z: int = 64
    n_theta: int = 128
    fine_n_r: int = 8
    fine_n_z: int = 32
    fine_n_theta: int = 64
    feature_dim: int = 16

    def __post_init__(self) -> None:
        if min(self.n_r, self.n_z, self.n_theta,
               self.fine_n_r, self.fine_n_z, self.fine_n_theta) < 2:
            raise ValueError("all grid resolutions must be >= 2")
        if self.radius <= 0 or self.half_height <= 0:
            raise ValueError("bounds must be positive")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be >= 1")

    @property
    def cell_extents(self) -> np.ndarray:
        """Full cell extents (dr, dtheta, dz) in (m, rad, m)."""
        return np.array([self.radius / self.n_r, _TWO_PI / self.n_theta,
                         2.0 * self.half_height / self.n_z])


def storage_cells(cfg: TriplaneConfig) -> int:
    """Total plane cells: n_theta*n_z + n_z*n_r + n_r*n_theta."""
    return cfg.n_theta * cfg.n_z + cfg.n_z * cfg.n_r + cfg.n_r * cfg.n_theta


@dataclass
class TriplaneGrid:
    """Three feature planes over one camera-centered cylinder."""

    config: TriplaneConfig
    origin: Pose
    theta_z: np.ndarray
    z_r: np.ndarray
    r_theta: np.ndarray
    origin_camera: int | None = None

    def __post_init__(self) -> None:
        c = self.config
        self.theta_z = np.ascontiguousarray(self.theta_z, np.float32).reshape(
            c.n_theta, c.n_z, c.feature_dim)
        self.z_r = np.ascontiguousarray(self.z_r, np.float32).reshape(
            c.n_z, c.n_r, c.feature_dim)
        self.r_theta = np.ascontiguousarray(self.r_theta, np.float32).reshape(
            c.n_r, c.n_theta, c.feature_dim)
        for p in (self.theta_z, self.z_r, self.r_theta):
            if not np.all(np.isfinite(p)):
                raise ValueError("non-finite plane features")

    def planes(self) -> dict[str, np.ndarray]:
        return {"theta_z": self.theta_z, "z_r": self.z_r, "r_theta": self.r_theta}

    def with_planes(self, theta_z, z_r, r_theta) -> "TriplaneGrid":
        return TriplaneGrid(self.config, self.origin, theta_z, z_r, r_theta,
                            self.origin_camera)

    def save(self, path: str | Path) -> None:
        cfg = self.config
        np.savez(path,
                 theta_z=self.theta_z, z_r=self.z_r, r_theta=self.r_theta,
                 origin=self.origin.matrix(),
                 origin_camera=-1 if self.origin_camera is None else self.origin_camera,
                 config=np.array([cfg.radius, cfg.half_height, cfg.n_r, cfg.n_z,
                                  cfg.n_theta, cfg.fine_n_r, cfg.fine_n_z,
                                  cfg.fine_n_theta, cfg.feature_dim]))

    @staticmethod
    def load(path: str | Path) -> "TriplaneGrid":
        with np.load(path) as data:
            c = data["config"]
            cfg = TriplaneConfig(float(c[0]), float(c[1]), *(int(v) for v in c[2:]))
            cam = int(data["origin_camera"])
            return TriplaneGrid(cfg, Pose.from_matrix(data["origin"]),
                                data["theta_z"], data["z_r"], data["r_theta"],
                                None if cam < 0 else cam)


@dataclass
class FeaturePoints:
    """World-frame points with features and source-camera indices."""

    positions: np.ndarray  # (N, 3) float64
    features: np.ndarray   # (N, D) float32
    cameras: np.ndarray    # (N,) int

    def __post_init__(self) -> None:
        self.positions = np.asarray(self.positions, np.float64).reshape(-1, 3)
        n = len(self.positions)
        feats = np.asarray(self.features, np.float32)
        self.features = feats.reshape(n, -1) if n else feats.reshape(0, feats.shape[-1])
        self.cameras = np.asarray(self.cameras, np.int64).reshape(n)
        if not (np.all(np.isfinite(self.positions)) and np.all(np.isfinite(self.features))):
            raise ValueError("non-finite feature points")

    def __len__(self) -> int:
        return len(self.positions)


# ---------------------------------------------------------------------------
# Grid addressing
# ---------------------------------------------------------------------------

def cell_of(cyl: np.ndarray, cfg: TriplaneConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cell indices (i_theta, j_z, k_r) for cylindrical coords (..., 3).

    theta addressing is circular; r and z raise on out-of-bounds input.
    The outer boundary r = R0 and z = +-Z0 belong to the last cell.
    """
    c = np.asarray(cyl, dtype=np.float64)
    r, th, z = c[..., 0], c[..., 1], c[..., 2]
    if np.any(r > cfg.radius) or np.any(r < 0) or np.any(np.abs(z) > cfg.half_height):
        raise ValueError("out of bounds")
    dr, dth, dz = cfg.cell_extents
    i = np.floor_divide(np.mod(th, _TWO_PI), dth).astype(np.int64) % cfg.n_theta
    j = np.minimum(np.floor_divide(z + cfg.half_height, dz).astype(np.int64), cfg.n_z - 1)
    k = np.minimum(np.floor_divide(r, dr).astype(np.int64), cfg.n_r - 1)
    return i, j, k


def cell_center(i: np.ndarray, j: np.ndarray, k: np.ndarray,
                cfg: TriplaneConfig) -> np.ndarray:
    """Cylindrical center (r, theta, z) of cells (i_theta, j_z, k_r)."""
    dr, dth, dz = cfg.cell_extents
    i = np.mod(np.asarray(i), cfg.n_theta)
    return np.stack(np.broadcast_arrays(
        (np.asarray(k) + 0.5) * dr,
        (i + 0.5) * dth,
        -cfg.half_height + (np.asarray(j) + 0.5) * dz,
    ), axis=-1)


# ---------------------------------------------------------------------------
# Initialization from feature points
# ---------------------------------------------------------------------------

def init_from_points(
    points: FeaturePoints,
    cfg: TriplaneConfig,
    origin: Pose,
    mode: str = "shared",
    origin_camera: int | None = None,
    base: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
) -> TriplaneGrid:
    """Scatter-mean feature points into the three planes on top of base embeddings.

    shared mode aggregates points from every camera; isolated mode keeps
    only points whose source camera equals origin_camera. Points are
    processed in canonical (camera, input index) order so summation is
    reproducible bitwise.
    """
    if mode not in ("shared", "isolated"):
        raise ValueError(f"unknown initialization mode {mode!r}")
    if mode == "isolated":
        if origin_camera is None:
            raise ValueError("isolated mode requires origin_camera")
        keep = points.cameras == origin_camera
        points = FeaturePoints(points.positions[keep], points.features[keep],
                               points.cameras[keep])

    order = np.lexsort((np.arange(len(points)), points.cameras))
    local = origin.inverse_transform(points.positions[order])
    cyl = cart_to_cyl(local)
    inb = (cyl[..., 0] <= cfg.radius) & (np.abs(cyl[..., 2]) <= cfg.half_height)
    feats = points.features[order][inb].astype(np.float32)
    i, j, k = cell_of(cyl[inb], cfg)

    if base is None:
        planes = [np.zeros((cfg.n_theta, cfg.n_z, cfg.feature_dim), np.float32),
                  np.zeros((cfg.n_z, cfg.n_r, cfg.feature_dim), np.float32),
                  np.zeros((cfg.n_r, cfg.n_theta, cfg.feature_dim), np.float32)]
    else:
        planes = [np.array(b, dtype=np.float32, copy=True) for b in base]

    for plane, (a0, a1) in zip(planes, ((i, j), (j, k), (k, i))):
        total = np.zeros_like(plane)
        count = np.zeros(plane.shape[:2], dtype=np.int64)
        np.add.at(total, (a0, a1), feats)
        np.add.at(count, (a0, a1), 1)
        hit = count > 0
        plane[hit] += total[hit] / count[hit, None].astype(np.float32)

    return TriplaneGrid(cfg, origin, planes[0], planes[1], planes[2], origin_camera)


def seeded_base(cfg: TriplaneConfig, seed: int, scale: float = 0.1) -> tuple:
    """Per-plane random base embeddings (the untrained stand-in for learned ones)."""
    rng = np.random.default_rng(seed)
    return (scale * rng.standard_normal((cfg.n_theta, cfg.n_z, cfg.feature_dim)),
            scale * rng.standard_normal((cfg.n_z, cfg.n_r, cfg.feature_dim)),
            scale * rng.standard_normal((cfg.n_r, cfg.n_theta, cfg.feature_dim)))


# ---------------------------------------------------------------------------
# Attention parameters
# ---------------------------------------------------------------------------

@dataclass
class AttentionParams:
    """Single-head dot-product attention maps, all bias-free."""

    wq: np.ndarray  # (D, Da)
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray  # (Da, D)
    provenance: str = "unspecified"

    def __post_init__(self) -> None:
        d, da = self.wq.shape
        if self.wk.shape != (d, da) or self.wv.shape != (d, da) or self.wo.shape != (da, d):
            raise ValueError("inconsistent attention parameter shapes")

    @staticmethod
    def seeded(d_f: int, d_a: int | None = None, seed: int = 0) -> "AttentionParams":
        d_a = d_a or d_f
        rng = np.random.default_rng(seed)
        s = 1.0 / np.sqrt(d_f)
        return AttentionParams(
            (s * rng.standard_normal((d_f, d_a))).astype(np.float32),
            (s * rng.standard_normal((d_f, d_a))).astype(np.float32),
            (s * rng.standard_normal((d_f, d_a))).astype(np.float32),
            ((1.0 / np.sqrt(d_a)) * rng.standard_normal((d_a, d_f))).astype(np.float32),
            provenance=f"seed:{seed}",
        )

    def save(self, path: str | Path) -> None:
        save_tensors(path, {"wq": self.wq, "wk": self.wk, "wv": self.wv, "wo": self.wo},
                     meta={"kind": "attention", "provenance": self.provenance})

    @staticmethod
    def load(path: str | Path) -> "AttentionParams":
        t, meta = load_tensors(path)
        return AttentionParams(t["wq"], t["wk"], t["wv"], t["wo"],
                               provenance=meta.get("provenance", str(path)))


@dataclass
class DecoderParams:
    """Two-layer MLP mapping features to raw Gaussian parameters.

    Output layout per point: 3 position offsets, 3 scale logits,
    4 quaternion components, 1 opacity logit.
    """

    w1: np.ndarray  # (D, hidden)
    b1: np.ndarray
    w2: np.ndarray  # (hidden, 11)
    b2: np.ndarray
    activation: str = "relu"

    def __post_init__(self) -> None:
        if self.w2.shape[1] != 11 or self.w1.shape[1] != self.w2.shape[0]:
            raise ValueError("inconsistent decoder parameter shapes")
        if self.activation not in ("relu", "tanh"):
            raise ValueError(f"unsupported activation {self.activation!r}")

    def forward(self, feats: np.ndarray) -> np.ndarray:
        h = feats.astype(np.float64) @ self.w1.astype(np.float64) + self.b1
        h = np.maximum(h, 0.0) if self.activation == "relu" else np.tanh(h)
        return h @ self.w2.astype(np.float64) + self.b2

    @staticmethod
    def seeded(d_f: int, hidden: int = 32, seed: int = 0) -> "DecoderParams":
        rng = np.random.default_rng(seed)
        return DecoderParams(
            (rng.standard_normal((d_f, hidden)) / np.sqrt(d_f)).astype(np.float32),
            np.zeros(hidden, np.float32),
            (rng.standard_normal((hidden, 11)) / np.sqrt(hidden)).astype(np.float32),
            np.zeros(11, np.float32),
        )

    def save(self, path: str | Path) -> None:
        save_tensors(path, {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2},
                     meta={"kind": "decoder", "activation": self.activation})

    @staticmethod
    def load(path: str | Path) -> "DecoderParams":
        t, meta = load_tensors(path)
        return DecoderParams(t["w1"], t["b1"], t["w2"], t["b2"],
                             activation=meta.get("activation", "relu"))


def _softmax(scores: np.ndarray) -> np.ndarray:
    """Stable softmax over the last axis; -inf scores are excluded."""
    m = np.max(scores, axis=-1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(scores - m)
    e[~np.isfinite(scores)] = 0.0
    total = e.sum(axis=-1, keepdims=True)
    return np.where(total > 0, e / np.maximum(total, 1e-300), 0.0)


# ---------------------------------------------------------------------------
# Cross-plane attention (one residual pass over all three planes)
# ---------------------------------------------------------------------------

def cross_plane_attention(
    grid: TriplaneGrid,
    params: AttentionParams,
    n_samples: int | None = None,
    masked_key_planes: tuple[str, ...] = (),
    with_weights: bool = False,
):
    """Each plane feature attends to the other two planes along its orthogonal axis.

    For the theta-z plane at (i, j) the keys/values are f_zr(j, k) and
    f_rtheta(k, i) for k over the radial cells (and symmetrically for the
    other planes). One softmax spans both key planes, so the weights over
    the 2*n keys sum to 1. All three updates read the same input snapshot.
    n_samples limits the orthogonal axis to its first n cells;
    masked_key_planes drops named planes as key sources (test surface).
    """
    if params.wq.shape[0] != grid.config.feature_dim:
        raise ValueError("attention parameter width does not match feature_dim")
    for name in masked_key_planes:
        if name not in ("theta_z", "z_r", "r_theta"):
            raise ValueError(f"unknown plane {name!r}")

    planes = {n: p.astype(np.float64) for n, p in grid.planes().items()}
    wq, wk, wv = (params.wq.astype(np.float64), params.wk.astype(np.float64),
                  params.wv.astype(np.float64))
    wo = params.wo.astype(np.float64)
    scale = 1.0 / np.sqrt(params.wq.shape[1])

    # per target plane: (key plane A, einsum score/value patterns), with the
    # orthogonal axis always the last score index
    spec = {
        "theta_z": (("z_r", "ijd,jkd->ijk", "ijk,jkd->ijd"),
                    ("r_theta", "ijd,kid->ijk", "ijk,kid->ijd")),
        "z_r": (("theta_z", "jkd,ijd->jki", "jki,ijd->jkd"),
                ("r_theta", "jkd,kid->jki", "jki,kid->jkd")),
        "r_theta": (("theta_z", "kid,ijd->kij", "kij,ijd->kid"),
                    ("z_r", "kid,jkd->kij", "kij,jkd->kid")),
    }

    out = {}
    weights_dbg = {}
    for target, sources in spec.items():
        q = planes[target] @ wq
        scores, values = [], []
        for src_name, s_pat, v_pat in sources:
            if src_name in masked_key_planes:
                continue
            src = planes[src_name]
            if n_samples is not None:
                # the orthogonal axis is axis 0 of f_zr/f_theta_z/f_r_theta keys
                # as addressed below; slice on the axis the pattern iterates
                src = _slice_orthogonal(target, src_name, src, n_samples)
            k = src @ wk
            v = src @ wv
            scores.append(np.einsum(s_pat, q, k) * scale)
            values.append((v_pat, v))
        if not scores:
            raise ValueError("all key planes masked")
        joint = _softmax(np.concatenate(scores, axis=-1))
        pieces = np.split(joint, np.cumsum([s.shape[-1] for s in scores])[:-1], axis=-1)
        attn = sum(np.einsum(v_pat, w, v) for w, (v_pat, v) in zip(pieces, values))
        out[target] = planes[target] + attn @ wo
        if with_weights:
            weights_dbg[target] = joint

    new = grid.with_planes(out["theta_z"], out["z_r"], out["r_theta"])
    return (new, weights_dbg) if with_weights else new


def _slice_orthogonal(target: str, source: str, plane: np.ndarray, n: int) -> np.ndarray:
    """Restrict a key plane to the first n cells of the target's orthogonal axis."""
    # orthogonal axes: theta_z -> r, z_r -> theta, r_theta -> z
    axis_of = {
        ("theta_z", "z_r"): 1, ("theta_z", "r_theta"): 0,
        ("z_r", "theta_z"): 0, ("z_r", "r_theta"): 1,
        ("r_theta", "theta_z"): 1, ("r_theta", "z_r"): 0,
    }[(target, source)]
    index = [slice(None)] * plane.ndim
    index[axis_of] = slice(0, n)
    return plane[tuple(index)]


# ---------------------------------------------------------------------------
# Triplane-to-image attention
# ---------------------------------------------------------------------------

def _fine_samples(cfg: TriplaneConfig, plane: str) -> tuple[np.ndarray, int]:
    """Fine-grid centers along the plane's orthogonal axis."""
    if plane == "theta_z":
        n = cfg.fine_n_r
        return (np.arange(n) + 0.5) * cfg.radius / n, n
    if plane == "z_r":
        n = cfg.fine_n_theta
        return (np.arange(n) + 0.5) * _TWO_PI / n, n
    n = cfg.fine_n_z
    return -cfg.half_height + (np.arange(n) + 0.5) * (2.0 * cfg.half_height) / n, n


def sample_points_for_plane(grid: TriplaneGrid, plane: str) -> np.ndarray:
    """3D cylindrical sample points (cells0, cells1, n_fine, 3) for one plane."""
    cfg = grid.config
    dr, dth, dz = cfg.cell_extents
    ortho, n = _fine_samples(cfg, plane)
    if plane == "theta_z":
        th = (np.arange(cfg.n_theta) + 0.5) * dth
        z = -cfg.half_height + (np.arange(cfg.n_z) + 0.5) * dz
        r_g, th_g, z_g = np.meshgrid(ortho, th, z, indexing="ij")
        cyl = np.stack([r_g, th_g, z_g], axis=-1)  # (n, nt, nz, 3)
        return np.moveaxis(cyl, 0, 2)              # (nt, nz, n, 3)
    if plane == "z_r":
        z = -cfg.half_height + (np.arange(cfg.n_z) + 0.5) * dz
        r = (np.arange(cfg.n_r) + 0.5) * dr
        th_g, z_g, r_g = np.meshgrid(ortho, z, r, indexing="ij")
        cyl = np.stack([r_g, th_g, z_g], axis=-1)
        return np.moveaxis(cyl, 0, 2)              # (nz, nr, n, 3)
    r = (np.arange(cfg.n_r) + 0.5) * dr
    th = (np.arange(cfg.n_theta) + 0.5) * dth
    z_g, r_g, th_g = np.meshgrid(ortho, r, th, indexing="ij")
    cyl = np.stack([r_g, th_g, z_g], axis=-1)
    return np.moveaxis(cyl, 0, 2)                  # (nr, nt, n, 3)


def triplane_to_image_attention(
    grid: TriplaneGrid,
    pano_features: list[np.ndarray],
    source_poses: list[Pose],
    dims: ImageDims,
    params: AttentionParams,
    with_weights: bool = False,
):
    """Enrich plane features by attending to projected panorama features.

    For each plane cell, fine-grid points along the orthogonal axis are
    projected into every source feature panorama; bilinear samples serve
    as keys and values for one residual cross-attention step. Samples
    whose projection is degenerate (at a source camera center or pole)
    are excluded from the softmax.
    """
    if len(pano_features) != len(source_poses):
        raise ValueError("missing feature map for a pose")
    for fm in pano_features:
        if fm.shape[:2] != dims.shape:
            raise ValueError(f"feature map shape {fm.shape[:2]} does not match dims")
        if fm.shape[2] != grid.config.feature_dim:
            raise ValueError("feature map feature_dim mismatch")

    wq, wk, wv = (params.wq.astype(np.float64), params.wk.astype(np.float64),
                  params.wv.astype(np.float64))
    wo = params.wo.astype(np.float64)
    scale = 1.0 / np.sqrt(params.wq.shape[1])

    out = {}
    weights_dbg = {}
    for name, plane in grid.planes().items():
        cyl = sample_points_for_plane(grid, name)          # (a, b, n, 3)
        a, b, n, _ = cyl.shape
        world = grid.origin.transform(cyl_to_cart(cyl.reshape(-1, 3)))

        sampled, valid = [], []
        for fm, pose in zip(pano_features, source_poses):
            p_cam = pose.inverse_transform(world)
            ok = p_cam[:, 0] ** 2 + p_cam[:, 2] ** 2 > POLAR_EPS
            uv = np.zeros((len(p_cam), 2))
            if np.any(ok):
                uv[ok] = equirect_project(p_cam[ok], dims)
            f = sample_bilinear(np.asarray(fm, np.float64), uv, wrap_u=True)
            f[~ok] = 0.0
            sampled.append(f.reshape(a, b, n, -1))
            valid.append(ok.reshape(a, b, n))
        feats = np.stack(sampled, axis=2).reshape(a, b, -1, grid.config.feature_dim)
        ok = np.stack(valid, axis=2).reshape(a, b, -1)

        q = plane.astype(np.float64) @ wq
        k = feats @ wk
        v = feats @ wv
        scores = np.einsum("abd,absd->abs", q, k) * scale
        scores[~ok] = -np.inf
        w = _softmax(scores)
        attn = np.einsum("abs,absd->abd", w, v)
        out[name] = plane.astype(np.float64) + attn @ wo
        if with_weights:
            weights_dbg[name] = w

    new = grid.with_planes(out["theta_z"], out["z_r"], out["r_theta"])
    return (new, weights_dbg) if with_weights else new


# ---------------------------------------------------------------------------
# Querying and decoding
# ---------------------------------------------------------------------------

def _sample_plane(plane: np.ndarray, c0: np.ndarray, c1: np.ndarray,
                  wrap0: bool = False, wrap1: bool = False) -> np.ndarray:
    """Bilinear plane lookup at fractional cell coordinates (centers at idx).

    Wrapping axes interpolate circularly; clamped axes extrapolate with
    the boundary cell value inside their half-cell margins.
    """
    n0, n1 = plane.shape[:2]
    i0 = np.floor(c0).astype(np.int64)
    j0 = np.floor(c1).astype(np.int64)
    a = (c0 - i0)[..., None]
    b = (c1 - j0)[..., None]
    if wrap0:
        i0m, i1m = i0 % n0, (i0 + 1) % n0
    else:
        i0m, i1m = np.clip(i0, 0, n0 - 1), np.clip(i0 + 1, 0, n0 - 1)
    if wrap1:
        j0m, j1m = j0 % n1, (j0 + 1) % n1
    else:
        j0m, j1m = np.clip(j0, 0, n1 - 1), np.clip(j0 + 1, 0, n1 - 1)
    return ((1 - a) * (1 - b) * plane[i0m, j0m] + a * (1 - b) * plane[i1m, j0m]
            + (1 - a) * b * plane[i0m, j1m] + a * b * plane[i1m, j1m])


def query_feature(grid: TriplaneGrid, cyl: np.ndarray) -> np.ndarray:
    """Sum of the three bilinear plane lookups at cylindrical coords (..., 3).

    theta interpolation wraps circularly; r and z clamp inside their
    boundary half-cells. Raises on out-of-bounds queries.
    """
    cfg = grid.config
    c = np.asarray(cyl, dtype=np.float64)
    r, th, z = c[..., 0], c[..., 1], c[..., 2]
    if np.any(r > cfg.radius) or np.any(r < 0) or np.any(np.abs(z) > cfg.half_height):
        raise ValueError("out of bounds")
    dr, dth, dz = cfg.cell_extents
    ci = np.mod(th, _TWO_PI) / dth - 0.5
    cj = (z + cfg.half_height) / dz - 0.5
    ck = r / dr - 0.5
    f = _sample_plane(grid.theta_z.astype(np.float64), ci, cj, wrap0=True)
    f = f + _sample_plane(grid.z_r.astype(np.float64), cj, ck)
    f = f + _sample_plane(grid.r_theta.astype(np.float64), ck, ci, wrap1=True)
    return f


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def decode_gaussians(grid: TriplaneGrid, decoder: DecoderParams,
                     cam_to_world: Pose, label: str | None = "volume") -> GaussianCloud:
    """Decode one Gaussian per coarse grid cell, volume-bounded to its cell.

    Offsets are tanh-squashed to half-cell extents and scales are
    sigmoid-bounded by half-cell extents, then carried to Cartesian via
    the cylindrical Jacobian; rotations are used as world-frame
    quaternions directly and opacity is the sigmoid of its logit.
    Colors start at neutral gray pending RGB retrieval.
    """
    cfg = grid.config
    i, j, k = np.meshgrid(np.arange(cfg.n_theta), np.arange(cfg.n_z),
                          np.arange(cfg.n_r), indexing="ij")
    i, j, k = i.ravel(), j.ravel(), k.ravel()

    feats = (grid.theta_z[i, j].astype(np.float64)
             + grid.z_r[j, k].astype(np.float64)
             + grid.r_theta[k, i].astype(np.float64))
    raw = decoder.forward(feats)

    half = 0.5 * cfg.cell_extents
    centers = cell_center(i, j, k, cfg)
    offsets = np.tanh(raw[:, 0:3]) * half
    s_local = _sigmoid(raw[:, 3:6]) * half

    local = cyl_to_cart(centers, offsets)
    world = cam_to_world.transform(local)
    J = cyl_jacobian(centers, offsets)
    scales = np.clip(transform_scale(s_local, J), SCALE_MIN, SCALE_MAX)

    quats = raw[:, 6:10]
    norms = np.linalg.norm(quats, axis=1, keepdims=True)
    quats = np.where(norms > 1e-12, quats / np.maximum(norms, 1e-300),
                     np.array([1.0, 0.0, 0.0, 0.0]))
    opac = _sigmoid(raw[:, 10])

    n = len(world)
    return GaussianCloud(world, scales, quats, opac,
                         np.full((n, 3), 0.5, np.float32), frame="world",
                         labels=None if label is None else [label] * n)
