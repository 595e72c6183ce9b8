"""Synthetic box-room scenes with analytic ground truth.

The room is an axis-aligned box centered at the world origin (+y toward
the floor, matching the projection convention); each face carries a
two-color checkerboard whose phase is offset by half a cell so no
texture edge coincides with the panorama seam meridian. The generator
emits a surface-sampled Gaussian cloud (the pixel-branch stand-in),
analytic GT panoramas/depths per camera (exact ray-box intersections),
per-pixel surface-id maps, seeded random feature panoramas (the
pixel-branch feature stand-in), and camera poses.

Everything is deterministic for a fixed spec, including the seeded
features.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import imgio
from .gaussians import GaussianCloud
from .geometry import ImageDims, Pose, equirect_unproject
from .ply import ply_write
from .triplane import FeaturePoints

SURFACES = ("wall_xneg", "wall_xpos", "ceiling", "floor", "wall_zneg", "wall_zpos")

# per-surface checkerboard color pairs (high contrast for seam/metric tests)
_PALETTE = {
    "floor": ((0.85, 0.75, 0.55), (0.25, 0.2, 0.12)),
    "ceiling": ((0.92, 0.92, 0.95), (0.35, 0.35, 0.42)),
    "wall_xpos": ((0.85, 0.25, 0.2), (0.3, 0.05, 0.05)),
    "wall_xneg": ((0.25, 0.75, 0.3), (0.05, 0.25, 0.08)),
    "wall_zpos": ((0.25, 0.45, 0.85), (0.05, 0.1, 0.3)),
    "wall_zneg": ((0.85, 0.8, 0.25), (0.3, 0.28, 0.05)),
}


@dataclass(frozen=True)
class SceneSpec:
    """Declarative description of one synthetic room + camera rig."""

    room: tuple[float, float, float] = (6.0, 3.0, 4.0)  # x, y (vertical), z extents
    checker_size: float = 0.5
    spacing: float = 0.05            # Gaussian lattice pitch on surfaces
    opacity: float = 0.92
    camera_positions: tuple[tuple[float, float, float], ...] = ((-0.5, 0.0, 0.0),
                                                                (0.5, 0.0, 0.0))
    feature_height: int = 64         # feature panoramas are (h, 2h, feature_dim)
    feature_dim: int = 16
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.room) <= 0:
            raise ValueError("room dimensions must be positive")
        if self.checker_size <= 0 or self.spacing <= 0:
            raise ValueError("checker size and spacing must be positive")
        half = 0.5 * np.asarray(self.room)
        for c in self.camera_positions:
            if np.any(np.abs(np.asarray(c)) >= half):
                raise ValueError("camera outside room")


def _checker_color(surface: str, a: np.ndarray, b: np.ndarray, size: float) -> np.ndarray:
    """Checkerboard color at in-plane coordinates; phase offset half a cell."""
    parity = (np.floor(a / size + 0.5) + np.floor(b / size + 0.5)).astype(np.int64) % 2
    c0, c1 = _PALETTE[surface]
    return np.where(parity[..., None] == 0, np.asarray(c0), np.asarray(c1))


def _surface_frames(room: tuple[float, float, float]):
    """(surface, normal axis, sign, in-plane axes) for all six faces."""
    return (
        ("wall_xneg", 0, -1, (1, 2)),
        ("wall_xpos", 0, +1, (1, 2)),
        ("ceiling", 1, -1, (0, 2)),
        ("floor", 1, +1, (0, 2)),
        ("wall_zneg", 2, -1, (0, 1)),
        ("wall_zpos", 2, +1, (0, 1)),
    )


def ray_box(origin: np.ndarray, dirs: np.ndarray, half: np.ndarray):
    """First-hit distances and surface ids for rays from inside the box.

    Returns (t, surface_index) where surface_index indexes SURFACES.
    """
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(dirs, dtype=np.float64)
    with np.errstate(divide="ignore"):
        t_pos = (half - o) / d    # exit through the + face of each axis
        t_neg = (-half - o) / d
    t_axis = np.where(d > 0, t_pos, np.where(d < 0, t_neg, np.inf))
    axis = np.argmin(t_axis, axis=-1)
    t = np.take_along_axis(t_axis, axis[..., None], axis=-1)[..., 0]
    sign_pos = np.take_along_axis(d, axis[..., None], axis=-1)[..., 0] > 0
    surface = axis * 2 + sign_pos.astype(np.int64)
    return t, surface


@dataclass
class SyntheticScene:
    """A generated room: labeled Gaussian cloud, poses, analytic GT."""

    spec: SceneSpec
    cloud: GaussianCloud
    poses: list[Pose]
    surface_ranges: dict[str, tuple[int, int]]

    @property
    def half_extents(self) -> np.ndarray:
        return 0.5 * np.asarray(self.spec.room, dtype=np.float64)

    def cloud_without(self, surface: str) -> GaussianCloud:
        """The pixel-branch cloud with one surface's Gaussians masked out."""
        lo, hi = self.surface_ranges[surface]
        keep = np.ones(len(self.cloud), dtype=bool)
        keep[lo:hi] = False
        return self.cloud.select(keep)

    def gt_render(self, pose: Pose, dims: ImageDims):
        """Analytic (rgb, depth, surface_id) panoramas for any inside pose."""
        if np.any(np.abs(pose.translation) >= self.half_extents):
            raise ValueError("camera outside room")
        h, w = dims.shape
        jj, ii = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
        px = np.stack([ii + 0.5, jj + 0.5], axis=-1).reshape(-1, 2)
        dirs = pose.rotate(equirect_unproject(px, np.ones(len(px)), dims))
        t, surface = ray_box(pose.translation, dirs, self.half_extents)
        hits = pose.translation + t[:, None] * dirs

        rgb = np.zeros((h * w, 3))
        for sid, (name, axis, _sign, (a_ax, b_ax)) in enumerate(_surface_frames(self.spec.room)):
            m = surface == sid
            if np.any(m):
                rgb[m] = _checker_color(name, hits[m, a_ax], hits[m, b_ax],
                                        self.spec.checker_size)
        # depth stays float64: it is the exact ray-box distance (1e-9 class)
        return (rgb.reshape(h, w, 3).astype(np.float32),
                t.reshape(h, w),
                surface.reshape(h, w).astype(np.int8))

    def surface_mask(self, pose: Pose, dims: ImageDims, surface: str) -> np.ndarray:
        """(H, W) mask of pixels whose first GT hit lies on the named surface."""
        _, _, sid = self.gt_render(pose, dims)
        return sid == SURFACES.index(surface)

    def feature_pano(self, camera: int) -> np.ndarray:
        """Seeded random feature panorama (h, 2h, D) standing in for F_pano."""
        spec = self.spec
        rng = np.random.default_rng(np.random.SeedSequence((spec.seed, 7, camera)))
        return rng.standard_normal(
            (spec.feature_height, 2 * spec.feature_height, spec.feature_dim)
        ).astype(np.float32)

    def feature_points(self, cameras: list[int] | None = None) -> FeaturePoints:
        """Unproject every feature-pixel through the analytic depth, all cameras.

        Each point carries the feature panorama value at its pixel and its
        source camera index (the pixel-branch point cloud stand-in).
        """
        spec = self.spec
        dims = ImageDims(2 * spec.feature_height, spec.feature_height)
        h, w = dims.shape
        cams = list(range(len(self.poses))) if cameras is None else cameras
        jj, ii = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
        px = np.stack([ii + 0.5, jj + 0.5], axis=-1).reshape(-1, 2)

        positions, features, owners = [], [], []
        for cam in cams:
            pose = self.poses[cam]
            dirs = pose.rotate(equirect_unproject(px, np.ones(len(px)), dims))
            t, _ = ray_box(pose.translation, dirs, self.half_extents)
            positions.append(pose.translation + t[:, None] * dirs)
            features.append(self.feature_pano(cam).reshape(-1, spec.feature_dim))
            owners.append(np.full(len(px), cam, dtype=np.int64))
        return FeaturePoints(np.concatenate(positions), np.concatenate(features),
                             np.concatenate(owners))


def gen_scene(spec: SceneSpec) -> SyntheticScene:
    """Build the room: one lattice of flat Gaussians per surface, labeled."""
    half = 0.5 * np.asarray(spec.room, dtype=np.float64)
    s = spec.spacing
    sigma_t = 0.55 * s      # tangent spread, overlapping neighbors
    sigma_n = max(s / 10.0, 2e-6)  # thin along the surface normal

    positions, scales, colors, labels = [], [], [], []
    ranges = {}
    count = 0
    for name, axis, sign, (a_ax, b_ax) in _surface_frames(spec.room):
        a = np.arange(-half[a_ax] + s / 2.0, half[a_ax], s)
        b = np.arange(-half[b_ax] + s / 2.0, half[b_ax], s)
        ga, gb = np.meshgrid(a, b, indexing="ij")
        n = ga.size
        pos = np.zeros((n, 3))
        pos[:, a_ax] = ga.ravel()
        pos[:, b_ax] = gb.ravel()
        pos[:, axis] = sign * half[axis]
        scale = np.full((n, 3), sigma_t)
        scale[:, axis] = sigma_n
        positions.append(pos)
        scales.append(scale)
        colors.append(_checker_color(name, ga.ravel(), gb.ravel(), spec.checker_size))
        labels.extend([name] * n)
        ranges[name] = (count, count + n)
        count += n

    n_total = count
    rot = np.zeros((n_total, 4), dtype=np.float32)
    rot[:, 0] = 1.0
    cloud = GaussianCloud(np.concatenate(positions), np.concatenate(scales), rot,
                          np.full(n_total, spec.opacity, np.float32),
                          np.concatenate(colors), frame="world", labels=labels)
    poses = [Pose(np.eye(3), np.asarray(c, dtype=np.float64))
             for c in spec.camera_positions]
    return SyntheticScene(spec, cloud, poses, ranges)


# ---------------------------------------------------------------------------
# Scene directory I/O
# ---------------------------------------------------------------------------

def save_scene(scene: SyntheticScene, out_dir: str | Path, dims: ImageDims,
               mask_surface: str | None = None) -> dict[str, str]:
    """Write all scene artifacts; returns a name -> path manifest.

    mask_surface drops one surface from the emitted cloud.ply (the full
    cloud's surface index ranges stay recorded in scene.json).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {}

    cloud = scene.cloud if mask_surface is None else scene.cloud_without(mask_surface)
    ply_write(cloud, out / "cloud.ply")
    manifest["cloud"] = str(out / "cloud.ply")

    poses = {"convention": "camera-to-world, row-major 4x4, +y toward image bottom",
             "cameras": [{"cam_to_world": p.matrix().tolist()} for p in scene.poses]}
    (out / "poses.json").write_text(json.dumps(poses, indent=2, sort_keys=True) + "\n")
    manifest["poses"] = str(out / "poses.json")

    for i, pose in enumerate(scene.poses):
        rgb, depth, surface = scene.gt_render(pose, dims)
        imgio.write_png(out / f"rgb_cam{i}.png", rgb)
        imgio.write_exr(out / f"rgb_cam{i}.exr", rgb)
        imgio.write_exr(out / f"depth_cam{i}.exr", depth)
        np.savez(out / f"surfaces_cam{i}.npz", surface=surface)
        np.savez(out / f"features_cam{i}.npz", features=scene.feature_pano(i))
        manifest[f"rgb_cam{i}"] = str(out / f"rgb_cam{i}.png")
        manifest[f"depth_cam{i}"] = str(out / f"depth_cam{i}.exr")

    meta = {"spec": asdict(scene.spec), "dims": [dims.width, dims.height],
            "surface_ranges": {k: list(v) for k, v in scene.surface_ranges.items()},
            "masked_surface": mask_surface}
    (out / "scene.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    manifest["scene"] = str(out / "scene.json")
    return manifest


def load_scene(scene_dir: str | Path) -> tuple[SyntheticScene, dict]:
    """Rebuild the deterministic scene object from scene.json (+ metadata)."""
    meta = json.loads((Path(scene_dir) / "scene.json").read_text())
    spec_dict = dict(meta["spec"])
    spec_dict["room"] = tuple(spec_dict["room"])
    spec_dict["camera_positions"] = tuple(tuple(c) for c in spec_dict["camera_positions"])
    scene = gen_scene(SceneSpec(**spec_dict))
    return scene, meta
