"""Cartesian vs spherical vs cylindrical triplane benchmarks.

Quantifies why the cylindrical field fits panoramic indoor scenes:
  - init_collision_stats: how many distinct 3D points pile into the same
    plane cells when a point cloud is scattered into each system;
  - sampling_projection_map: panorama coverage of the sample shells used
    by image attention, per shell distance;
  - manhattan_alignment: how well labeled planar surfaces hug a single
    coordinate isosurface of each system.

Comparisons are run at equal total plane-cell budgets so none of the
systems gets extra capacity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import ImageDims, cart_to_cyl, cart_to_sph, cyl_to_cart, equirect_project, sph_to_cart

_TWO_PI = 2.0 * np.pi

KINDS = ("cartesian", "spherical", "cylindrical")

# native axis names, whether the axis is circular, and the plane pairs
_AXES = {
    "cartesian": (("x", "y", "z"), (False, False, False)),
    "spherical": (("rho", "phi", "psi"), (False, False, True)),
    "cylindrical": (("r", "theta", "z"), (False, True, False)),
}
_PLANES = ((0, 1), (1, 2), (2, 0))


@dataclass(frozen=True)
class CoordSys:
    """A gridded coordinate system centered on the camera.

    resolutions follow the native axis order:
      cartesian  (n_x, n_y, n_z) over [-B, B]^3,    bounds = (B,)
      spherical  (n_rho, n_phi, n_psi),             bounds = (R,)
      cylindrical(n_r, n_theta, n_z),               bounds = (R, Z0)
    """

    kind: str
    resolutions: tuple[int, int, int]
    bounds: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown coordinate system {self.kind!r}")
        if min(self.resolutions) < 2:
            raise ValueError("resolutions must be >= 2")
        if min(self.bounds) <= 0:
            raise ValueError("bounds must be positive")

    @property
    def axis_names(self) -> tuple[str, str, str]:
        return _AXES[self.kind][0]

    def native_ranges(self) -> list[tuple[float, float]]:
        if self.kind == "cartesian":
            b = self.bounds[0]
            return [(-b, b)] * 3
        if self.kind == "spherical":
            return [(0.0, self.bounds[0]), (0.0, np.pi), (0.0, _TWO_PI)]
        r, z0 = self.bounds
        return [(0.0, r), (0.0, _TWO_PI), (-z0, z0)]

    def cell_extents(self) -> np.ndarray:
        return np.array([(hi - lo) / n for (lo, hi), n
                         in zip(self.native_ranges(), self.resolutions)])

    def plane_cells(self) -> int:
        n0, n1, n2 = self.resolutions
        return n0 * n1 + n1 * n2 + n2 * n0

    def to_native(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Native coordinates plus the in-bounds mask for (N, 3) Cartesian points."""
        p = np.asarray(points, dtype=np.float64)
        if self.kind == "cartesian":
            native = p.copy()
        elif self.kind == "spherical":
            native = cart_to_sph(p)
        else:
            c = cart_to_cyl(p)
            native = np.stack([c[..., 0], c[..., 1], c[..., 2]], axis=-1)
        inb = np.ones(len(p), dtype=bool)
        for axis, (lo, hi) in enumerate(self.native_ranges()):
            if not _AXES[self.kind][1][axis]:
                inb &= (native[:, axis] >= lo) & (native[:, axis] <= hi)
        return native, inb

    def cell_indices(self, native: np.ndarray) -> np.ndarray:
        """Per-axis cell indices for in-bounds native coordinates."""
        idx = np.empty(native.shape, dtype=np.int64)
        for axis, ((lo, hi), n) in enumerate(zip(self.native_ranges(), self.resolutions)):
            frac = (native[:, axis] - lo) / (hi - lo) * n
            i = np.floor(frac).astype(np.int64)
            if _AXES[self.kind][1][axis]:
                i %= n
            else:
                i = np.clip(i, 0, n - 1)
            idx[:, axis] = i
        return idx


@dataclass
class CollisionHistogram:
    """Per-plane occupancy counts with overlap summary statistics."""

    system: CoordSys
    counts: dict[str, np.ndarray]
    n_points: int  # in-bounds points (each lands in one cell per plane)

    def summary(self) -> dict[str, dict[str, float]]:
        out = {}
        for plane, c in self.counts.items():
            occupied = c[c > 0]
            colliding = int(c[c >= 2].sum())
            out[plane] = {
                "max": int(c.max(initial=0)),
                "mean_occupied": float(occupied.mean()) if occupied.size else 0.0,
                "frac_cells_multi": float((c >= 2).sum() / c.size),
                "collision_fraction": colliding / self.n_points if self.n_points else 0.0,
                "gini": _gini(occupied),
            }
        return out

    @property
    def collision_fraction(self) -> float:
        """Fraction of point-slots sharing a cell, averaged over the planes."""
        vals = [s["collision_fraction"] for s in self.summary().values()]
        return float(np.mean(vals))


def _gini(counts: np.ndarray) -> float:
    if counts.size == 0:
        return 0.0
    x = np.sort(counts.astype(np.float64))
    n = x.size
    total = x.sum()
    if total == 0:
        return 0.0
    ranks = np.arange(1, n + 1)
    return float(((2 * ranks - n - 1) * x).sum() / (n * total))


def init_collision_stats(system: CoordSys, points: np.ndarray) -> CollisionHistogram:
    """Exact per-plane occupancy histogram of a point cloud in one system."""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(p) == 0:
        raise ValueError("need a nonempty point cloud")
    native, inb = system.to_native(p)
    idx = system.cell_indices(native[inb])
    names = system.axis_names
    counts = {}
    for a0, a1 in _PLANES:
        plane = np.zeros((system.resolutions[a0], system.resolutions[a1]), dtype=np.int64)
        np.add.at(plane, (idx[:, a0], idx[:, a1]), 1)
        counts[f"{names[a0]}_{names[a1]}"] = plane
    return CollisionHistogram(system, counts, int(inb.sum()))


@dataclass
class CoverageMap:
    """Hit counts of one shell's samples projected into the panorama."""

    hits: np.ndarray  # (H, W) int
    coverage: float   # fraction of pixels with >= 1 hit
    shell_value: float  # native first-axis coordinate of the shell


def shell_points(system: CoordSys, shell_index: int, oversample: int = 1) -> np.ndarray:
    """Cartesian sample points of one constant-first-axis shell.

    Shells move along x for Cartesian grids, rho for spherical, and r for
    cylindrical; the other two axes are sampled at cell centers
    (oversample multiplies their resolution).
    """
    n0 = system.resolutions[0]
    if not 0 <= shell_index < n0:
        raise ValueError("shell index out of range")
    ranges = system.native_ranges()
    lo, hi = ranges[0]
    val0 = lo + (shell_index + 0.5) * (hi - lo) / n0

    n1 = system.resolutions[1] * oversample
    n2 = system.resolutions[2] * oversample
    (lo1, hi1), (lo2, hi2) = ranges[1], ranges[2]
    a1 = lo1 + (np.arange(n1) + 0.5) * (hi1 - lo1) / n1
    a2 = lo2 + (np.arange(n2) + 0.5) * (hi2 - lo2) / n2
    g1, g2 = np.meshgrid(a1, a2, indexing="ij")
    native = np.stack([np.full(g1.shape, val0), g1, g2], axis=-1).reshape(-1, 3)

    if system.kind == "cartesian":
        return native
    if system.kind == "spherical":
        return sph_to_cart(native)
    return cyl_to_cart(native)  # native (r, theta, z) matches cyl_to_cart's layout


def sampling_projection_map(system: CoordSys, shell_index: int, dims: ImageDims,
                            oversample: int = 1) -> CoverageMap:
    """Project one shell's sample points into the panorama and count hits."""
    pts = shell_points(system, shell_index, oversample)
    ok = pts[:, 0] ** 2 + pts[:, 2] ** 2 > 0
    hits = np.zeros(dims.shape, dtype=np.int64)
    if np.any(ok):
        uv = equirect_project(pts[ok], dims)
        u = np.minimum(uv[:, 0].astype(np.int64), dims.width - 1)
        v = np.minimum(uv[:, 1].astype(np.int64), dims.height - 1)
        np.add.at(hits, (v, u), 1)
    ranges = system.native_ranges()
    n0 = system.resolutions[0]
    val0 = ranges[0][0] + (shell_index + 0.5) * (ranges[0][1] - ranges[0][0]) / n0
    return CoverageMap(hits, float((hits > 0).mean()), val0)


def manhattan_alignment(system: CoordSys, surfaces: dict[str, np.ndarray],
                        tolerance_cells: float = 0.5) -> dict[str, float]:
    """Per-surface fraction of points within half a cell of one isosurface.

    For each labeled surface and each native coordinate, the candidate
    isosurface level is the median coordinate of the surface's points; a
    point is aligned when its coordinate sits within tolerance_cells cell
    extents of that level (circular distance on angular axes). The
    surface's score is the best coordinate's fraction. Returns per-label
    fractions plus a point-weighted "overall".
    """
    extents = system.cell_extents()
    circular = _AXES[system.kind][1]
    out = {}
    total_pts = 0
    total_aligned = 0.0
    for label, pts in surfaces.items():
        native, _ = system.to_native(np.asarray(pts, dtype=np.float64).reshape(-1, 3))
        best = 0.0
        for axis in range(3):
            q = native[:, axis]
            if circular[axis]:
                # circular median via the angular mean direction
                level = np.arctan2(np.sin(q).mean(), np.cos(q).mean()) % _TWO_PI
                dist = np.abs((q - level + np.pi) % _TWO_PI - np.pi)
            else:
                level = np.median(q)
                dist = np.abs(q - level)
            frac = float((dist <= tolerance_cells * extents[axis] + 1e-12).mean())
            best = max(best, frac)
        out[label] = best
        total_pts += len(native)
        total_aligned += best * len(native)
    out["overall"] = total_aligned / total_pts if total_pts else 0.0
    return out


def equal_budget_systems(budget: int, cart_bound: float, sph_radius: float,
                         cyl_radius: float, cyl_half_height: float) -> dict[str, CoordSys]:
    """Three systems whose plane-cell totals are as close to budget as feasible.

    Axis aspect ratios are fixed (cube for Cartesian; azimuth = 2x polar =
    4x radial for spherical; the package's default theta:z:r = 8:4:1 for
    cylindrical) and the largest configuration not exceeding the budget
    by more than 2% is chosen.
    """
    def best(make) -> CoordSys:
        chosen = None
        for k in range(2, 4096):
            sys_k = make(k)
            if sys_k.plane_cells() > budget * 1.02:
                break
            chosen = sys_k
        if chosen is None:
            raise ValueError("budget too small")
        return chosen

    return {
        "cartesian": best(lambda k: CoordSys("cartesian", (k, k, k), (cart_bound,))),
        "spherical": best(lambda k: CoordSys("spherical", (k, 2 * k, 4 * k), (sph_radius,))),
        "cylindrical": best(lambda k: CoordSys("cylindrical", (k, 8 * k, 4 * k),
                                               (cyl_radius, cyl_half_height))),
    }
