"""Deterministic CPU splatting renderer for equirectangular panoramas.

Two render paths share one tile-based compositing core:
  - render_equirect: projects Gaussians directly with the equirectangular
    projection and its Jacobian;
  - render_cubemap: renders six 90-degree pinhole faces and stitches them
    back into a panorama (the reference pipeline the direct path is
    checked against).

Compositing is front-to-back per pixel in strictly increasing Euclidean
camera distance (ties broken by cloud index) with early termination once
transmittance falls below 1/255; a terminated pixel reports saturated
alpha. Tiles own disjoint pixels and are processed in a fixed order, so
output is bitwise identical for any thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .gaussians import GaussianCloud
from .geometry import ImageDims, Pose, equirect_jacobian, equirect_project, equirect_unproject
from .panorama import Panorama
from .sampling import sample_bilinear


@dataclass(frozen=True)
class RenderOptions:
    tile_size: int = 16
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)
    pole_clamp_deg: float = 89.5   # Jacobians evaluated at this max |latitude|
    max_radius_px: float = 512.0   # footprint cap against polar smear
    dilation: float = 0.3          # px^2 added to the 2D covariance diagonal
    cutoff_sigma: float = 3.0
    alpha_min: float = 1.0 / 255.0
    alpha_max: float = 0.99
    transmittance_min: float = 1.0 / 255.0
    threads: int = 1
    cube_face_size: int | None = None  # defaults to the panorama height


@dataclass
class Splat2D:
    """Screen-space splats (struct of arrays), sorted front to back.

    conics holds the packed upper triangle (a, b, c) of each positive
    definite inverse 2D covariance; depths are Euclidean camera
    distances.
    """

    centers: np.ndarray   # (N, 2) pixel coordinates
    conics: np.ndarray    # (N, 3)
    depths: np.ndarray    # (N,)
    opacities: np.ndarray # (N,)
    colors: np.ndarray    # (N, 3)
    radii: np.ndarray     # (N,) bounding radius in pixels

    def __len__(self) -> int:
        return len(self.centers)


def _finish_splats(centers, cov2d, depths, opacities, colors, order_keys, opts) -> Splat2D:
    """Dilate, invert, cull non-positive-definite splats, and depth-sort."""
    a = cov2d[:, 0, 0] + opts.dilation
    b = cov2d[:, 0, 1]
    c = cov2d[:, 1, 1] + opts.dilation
    det = a * c - b * b
    ok = (det > 0) & (a > 0) & (c > 0)

    mid = 0.5 * (a + c)
    lam_max = mid + np.sqrt(np.maximum(mid * mid - det, 0.0))
    radii = np.minimum(opts.cutoff_sigma * np.sqrt(lam_max), opts.max_radius_px)

    conics = np.stack([c / det, -b / det, a / det], axis=1)
    order = np.lexsort((order_keys[ok], depths[ok]))
    keep = np.flatnonzero(ok)[order]
    return Splat2D(centers[keep], conics[keep], depths[keep],
                   opacities[keep], colors[keep], radii[keep])


def project_equirect_splats(cloud: GaussianCloud, pose: Pose, dims: ImageDims,
                            opts: RenderOptions) -> Splat2D:
    """Project a world-frame cloud through a camera pose into screen space."""
    p_cam = pose.inverse_transform(cloud.positions.astype(np.float64))
    d_g = np.linalg.norm(p_cam, axis=1)
    lat_max = np.deg2rad(opts.pole_clamp_deg)
    # cull centers so close to the camera that even the clamped evaluation
    # point would trip the polar-singularity guard
    live = d_g * np.cos(lat_max) > 2e-6
    idx = np.flatnonzero(live)
    p_cam = p_cam[live]
    d_g = d_g[live]

    # clamp evaluation latitude near the poles; footprints stay bounded
    # via max_radius_px
    rho = np.hypot(p_cam[:, 0], p_cam[:, 2])
    lat = np.arctan2(p_cam[:, 1], rho)
    polar = np.abs(lat) > lat_max
    p_eval = p_cam.copy()
    if np.any(polar):
        az = np.where(rho[polar] > 0, np.arctan2(p_cam[polar, 0], p_cam[polar, 2]), 0.0)
        rho_c = d_g[polar] * np.cos(lat_max)
        p_eval[polar, 0] = rho_c * np.sin(az)
        p_eval[polar, 1] = d_g[polar] * np.sin(lat_max) * np.sign(lat[polar])
        p_eval[polar, 2] = rho_c * np.cos(az)

    centers = equirect_project(p_eval, dims)
    J = equirect_jacobian(p_eval, dims)
    R_wc = pose.rotation.T
    cov_cam = np.einsum("ij,njk,lk->nil", R_wc, cloud.covariances()[live], R_wc)
    cov2d = np.einsum("nij,njk,nlk->nil", J, cov_cam, J)
    return _finish_splats(centers, cov2d, d_g,
                          cloud.opacities[live].astype(np.float64),
                          cloud.colors[live].astype(np.float64), idx, opts)


def _composite(splats: Splat2D, width: int, height: int, opts: RenderOptions,
               wrap_u: bool) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Tile-parallel front-to-back compositing.

    Composites color and depth jointly; returns float64 (H, W, 4)
    premultiplied (r, g, b, depth), (H, W) weight-sum, and (H, W) final
    transmittance.
    """
    ts = opts.tile_size
    n_tx = -(-width // ts)
    n_ty = -(-height // ts)

    values = np.concatenate([splats.colors, splats.depths[:, None]], axis=1)
    color = np.zeros((height, width, 4))
    weight = np.zeros((height, width))
    transmit = np.ones((height, width))
    if len(splats) == 0:
        return color, weight, transmit

    # tile ranges per splat; horizontal tile adjacency is circular, and
    # splats whose bounding box misses the image entirely are skipped
    u, v = splats.centers[:, 0], splats.centers[:, 1]
    r = splats.radii
    tx0 = np.floor((u - r) / ts).astype(np.int64)
    tx1 = np.floor((u + r) / ts).astype(np.int64)
    if wrap_u:
        nx = np.minimum(tx1 - tx0 + 1, n_tx)
    else:
        miss_x = (tx1 < 0) | (tx0 > n_tx - 1)
        tx0 = np.clip(tx0, 0, n_tx - 1)
        tx1 = np.clip(tx1, 0, n_tx - 1)
        nx = np.where(miss_x, 0, tx1 - tx0 + 1)
    ty0 = np.floor((v - r) / ts).astype(np.int64)
    ty1 = np.floor((v + r) / ts).astype(np.int64)
    miss_y = (ty1 < 0) | (ty0 > n_ty - 1)
    ty0 = np.clip(ty0, 0, n_ty - 1)
    ty1 = np.clip(ty1, 0, n_ty - 1)
    ny = np.where(miss_y, 0, ty1 - ty0 + 1)

    counts = nx * ny
    splat_of = np.repeat(np.arange(len(splats)), counts)
    local = np.arange(len(splat_of)) - np.repeat(np.cumsum(counts) - counts, counts)
    col = tx0[splat_of] + local % nx[splat_of]
    if wrap_u:
        col %= n_tx
    row = ty0[splat_of] + local // nx[splat_of]
    tile_of = row * n_tx + col

    # stable sort keeps the global front-to-back order inside each tile
    by_tile = np.argsort(tile_of, kind="stable")
    tile_sorted = tile_of[by_tile]
    splat_sorted = splat_of[by_tile]
    bounds = np.searchsorted(tile_sorted, np.arange(n_tx * n_ty + 1))

    cut2 = opts.cutoff_sigma ** 2

    def run_tile(t: int) -> None:
        sel = splat_sorted[bounds[t]:bounds[t + 1]]
        if len(sel) == 0:
            return
        ty, tx = divmod(t, n_tx)
        x0, x1 = tx * ts, min((tx + 1) * ts, width)
        y0, y1 = ty * ts, min((ty + 1) * ts, height)
        px_u = np.arange(x0, x1) + 0.5
        px_v = np.arange(y0, y1) + 0.5
        du = px_u[None, :] - u[sel][:, None]
        if wrap_u:
            du = (du + width / 2.0) % width - width / 2.0
        dv = px_v[None, :] - v[sel][:, None]
        ca, cb, cc = (splats.conics[sel, i][:, None, None] for i in range(3))
        du = du[:, None, :]
        dv = dv[:, :, None]
        q = ca * du * du + 2.0 * cb * du * dv + cc * dv * dv
        alpha = np.minimum(splats.opacities[sel][:, None, None] * np.exp(-0.5 * q),
                           opts.alpha_max)
        alpha[(q > cut2) | (alpha < opts.alpha_min)] = 0.0

        t_incl = np.cumprod(1.0 - alpha, axis=0)
        t_prev = np.empty_like(t_incl)
        t_prev[0] = 1.0
        t_prev[1:] = t_incl[:-1]
        w = alpha * t_prev
        w[t_prev < opts.transmittance_min] = 0.0

        color[y0:y1, x0:x1] = np.einsum("nyx,nc->yxc", w, values[sel])
        weight[y0:y1, x0:x1] = w.sum(axis=0)
        transmit[y0:y1, x0:x1] = np.prod(np.where(w > 0, 1.0 - alpha, 1.0), axis=0)

    tiles = range(n_tx * n_ty)
    if opts.threads > 1:
        with ThreadPoolExecutor(max_workers=opts.threads) as pool:
            list(pool.map(run_tile, tiles))
    else:
        for t in tiles:
            run_tile(t)
    return color, weight, transmit


def _assemble(dims: ImageDims, color4, weight, transmit, opts: RenderOptions) -> Panorama:
    bg = np.asarray(opts.background, dtype=np.float64)
    rgb = np.clip(color4[..., :3] + transmit[..., None] * bg, 0.0, 1.0)
    depth = np.where(weight > 0, color4[..., 3] / np.maximum(weight, 1e-300), 0.0)
    # below the 8-bit transmittance quantum the pixel counts as saturated
    alpha = np.where(transmit < opts.transmittance_min, 1.0, 1.0 - transmit)
    return Panorama(dims, rgb, depth, alpha)


def render_equirect(cloud: GaussianCloud, pose: Pose, dims: ImageDims,
                    opts: RenderOptions | None = None) -> Panorama:
    """Render a world-frame Gaussian cloud to an equirectangular panorama."""
    if len(cloud) == 0:
        raise ValueError("empty cloud")
    opts = opts or RenderOptions()
    splats = project_equirect_splats(cloud, pose, dims, opts)
    color4, weight, transmit = _composite(splats, dims.width, dims.height, opts, wrap_u=True)
    return _assemble(dims, color4, weight, transmit, opts)


# Cube faces as (right, down, forward) axes in the camera frame.
_CUBE_FACES = (
    ((1, 0, 0), (0, 1, 0), (0, 0, 1)),     # +z
    ((-1, 0, 0), (0, 1, 0), (0, 0, -1)),   # -z
    ((0, 0, -1), (0, 1, 0), (1, 0, 0)),    # +x
    ((0, 0, 1), (0, 1, 0), (-1, 0, 0)),    # -x
    ((1, 0, 0), (0, 0, -1), (0, 1, 0)),    # +y
    ((1, 0, 0), (0, 0, 1), (0, -1, 0)),    # -y
)
_FACE_OF_AXIS = {(2, 1): 0, (2, -1): 1, (0, 1): 2, (0, -1): 3, (1, 1): 4, (1, -1): 5}


_FRUSTUM_GUARD = 1.3  # keep splats up to 1.3x the face half-FOV (guard band)


def _project_pinhole_splats(cloud: GaussianCloud, pose: Pose, face_R: np.ndarray,
                            size: int, focal: float, opts: RenderOptions,
                            cov_world: np.ndarray | None = None) -> Splat2D:
    p_cam = pose.inverse_transform(cloud.positions.astype(np.float64))
    d_g = np.linalg.norm(p_cam, axis=1)
    p_f = p_cam @ face_R  # face_R columns are the face axes
    lim = _FRUSTUM_GUARD * (size / 2.0) / focal
    with np.errstate(divide="ignore", invalid="ignore"):
        live = ((p_f[:, 2] > 1e-4)
                & (np.abs(p_f[:, 0] / p_f[:, 2]) <= lim)
                & (np.abs(p_f[:, 1] / p_f[:, 2]) <= lim))
    idx = np.flatnonzero(live)
    p_f, d_g = p_f[live], d_g[live]
    x, y, z = p_f[:, 0], p_f[:, 1], p_f[:, 2]

    cx = size / 2.0
    centers = np.stack([focal * x / z + cx, focal * y / z + cx], axis=1)
    # evaluate the Jacobian at frustum-clamped coordinates so grazing splats
    # keep bounded, local footprints (standard EWA practice)
    xj = np.clip(x / z, -lim, lim) * z
    yj = np.clip(y / z, -lim, lim) * z
    J = np.zeros((len(p_f), 2, 3))
    J[:, 0, 0] = focal / z
    J[:, 0, 2] = -focal * xj / (z * z)
    J[:, 1, 1] = focal / z
    J[:, 1, 2] = -focal * yj / (z * z)

    if cov_world is None:
        cov_world = cloud.covariances()
    R_wf = (pose.rotation @ face_R).T  # world -> face frame
    cov_f = np.einsum("ij,njk,lk->nil", R_wf, cov_world[live], R_wf)
    cov2d = np.einsum("nij,njk,nlk->nil", J, cov_f, J)
    return _finish_splats(centers, cov2d, d_g, cloud.opacities[live].astype(np.float64),
                          cloud.colors[live].astype(np.float64), idx, opts)


def render_cubemap(cloud: GaussianCloud, pose: Pose, dims: ImageDims,
                   opts: RenderOptions | None = None) -> Panorama:
    """Render via six pinhole faces, then stitch to an equirectangular image.

    Faces carry a one-pixel border so the stitch can sample bilinearly
    without clamping at face boundaries; depth is composited as Euclidean
    camera distance, matching render_equirect.
    """
    if len(cloud) == 0:
        raise ValueError("empty cloud")
    opts = opts or RenderOptions()
    s = opts.cube_face_size or dims.height
    padded = s + 2
    focal = s / 2.0

    faces_rgb, faces_depth, faces_alpha = [], [], []
    bg = np.asarray(opts.background, dtype=np.float64)
    cov_world = cloud.covariances()
    for axes in _CUBE_FACES:
        face_R = np.array(axes, dtype=np.float64).T
        splats = _project_pinhole_splats(cloud, pose, face_R, padded, focal, opts,
                                         cov_world)
        color4, weight, transmit = _composite(splats, padded, padded, opts, wrap_u=False)
        faces_rgb.append(np.clip(color4[..., :3] + transmit[..., None] * bg, 0.0, 1.0))
        faces_depth.append(np.where(weight > 0, color4[..., 3] / np.maximum(weight, 1e-300), 0.0))
        faces_alpha.append(np.where(transmit < opts.transmittance_min, 1.0, 1.0 - transmit))

    # stitch: sample the face that owns each pixel's direction
    h, w = dims.shape
    jj, ii = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    px = np.stack([ii + 0.5, jj + 0.5], axis=-1).reshape(-1, 2)
    dirs = equirect_unproject(px, np.ones(len(px)), dims)
    axis = np.argmax(np.abs(dirs), axis=1)
    sign = np.where(dirs[np.arange(len(dirs)), axis] >= 0, 1, -1)

    rgb = np.empty((h * w, 3))
    depth = np.empty(h * w)
    alpha = np.empty(h * w)
    for (ax, sg), face in _FACE_OF_AXIS.items():
        m = (axis == ax) & (sign == sg)
        if not np.any(m):
            continue
        face_R = np.array(_CUBE_FACES[face], dtype=np.float64).T
        d_f = dirs[m] @ face_R
        uv = focal * d_f[:, :2] / d_f[:, 2:3] + padded / 2.0
        rgb[m] = sample_bilinear(faces_rgb[face], uv, wrap_u=False)
        depth[m] = sample_bilinear(faces_depth[face], uv, wrap_u=False)
        alpha[m] = sample_bilinear(faces_alpha[face], uv, wrap_u=False)

    return Panorama(dims, np.clip(rgb.reshape(h, w, 3), 0.0, 1.0),
                    np.maximum(depth.reshape(h, w), 0.0), alpha.reshape(h, w))


def composite_loss(render: Panorama, gt_rgb: np.ndarray, ref_depth: np.ndarray,
                   perceptual=None) -> float:
    """L1 color + 0.05 * perceptual + 0.1 * L1 depth; perceptual defaults to 0."""
    gt = np.asarray(gt_rgb, dtype=np.float64)
    rd = np.asarray(ref_depth, dtype=np.float64)
    if gt.shape != render.rgb.shape or rd.shape != render.depth.shape:
        raise ValueError("shape mismatch between render and references")
    loss = float(np.mean(np.abs(render.rgb.astype(np.float64) - gt)))
    if perceptual is not None:
        loss += 0.05 * float(perceptual(render.rgb, gt))
    loss += 0.1 * float(np.mean(np.abs(render.depth.astype(np.float64) - rd)))
    return loss
