"""Coordinate systems, projections, and Jacobians for panoramic splatting.

Frame conventions (used package-wide):
  - Camera-centered right-handed Cartesian frame, meters.
  - +y is the cylinder axis and increases toward the image bottom
    (a point with y > 0 projects to v > H/2).
  - +z faces the image center (u = W/2); azimuth theta = 0 maps to the
    panorama seam u = 0 (mod W).
  - Equirectangular image: u in [0, W) wrapping, v in [0, H] clamped,
    W = 2*H.
  - Cylindrical coordinates (r, theta, z): r >= 0 meters, theta in
    [0, 2*pi) radians, z meters along +y. The Cartesian map is
    x = -(r+dr)*sin(theta+dt), y = z+dz, z = -(r+dr)*cos(theta+dt).
  - Spherical coordinates (rho, phi, psi): radius, polar angle from +y
    in [0, pi], azimuth psi matching the cylindrical theta.

atan2 branch: range (-pi, pi], ties at +-pi resolve to +pi; u wrapping
uses floor-mod. All functions are pure and vectorized over leading
dimensions (points are arrays of shape (..., 3)).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Squared-distance-to-axis guard below which the equirectangular Jacobian
# is considered singular (m^2).
POLAR_EPS = 1e-12

_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class ImageDims:
    """Equirectangular image size in pixels; width must be twice the height."""

    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width != 2 * self.height:
            raise ValueError(f"width must equal 2*height, got {self.width}x{self.height}")
        if self.height < 2:
            raise ValueError("height must be >= 2")

    @property
    def shape(self) -> tuple[int, int]:
        """(rows, cols) for array allocation."""
        return (self.height, self.width)


@dataclass(frozen=True)
class Pose:
    """Rigid camera-to-world transform.

    rotation: (3, 3) orthonormal, det +1 (checked to 1e-9).
    translation: (3,) camera center in world coordinates, meters.
    """

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(R)) or not np.all(np.isfinite(t)):
            raise ValueError("pose contains non-finite values")
        if np.abs(R @ R.T - np.eye(3)).max() > 1e-9 or abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ValueError("rotation is not orthonormal with determinant +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Map camera-frame points (..., 3) to the world frame."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def inverse_transform(self, points: np.ndarray) -> np.ndarray:
        """Map world-frame points (..., 3) to the camera frame."""
        p = np.asarray(points, dtype=np.float64)
        return (p - self.translation) @ self.rotation

    def rotate(self, vectors: np.ndarray) -> np.ndarray:
        """Rotate direction vectors camera -> world (no translation)."""
        return np.asarray(vectors, dtype=np.float64) @ self.rotation.T

    def inverse(self) -> "Pose":
        return Pose(self.rotation.T, -self.rotation.T @ self.translation)

    def compose(self, other: "Pose") -> "Pose":
        """Pose mapping other's camera frame through self (self @ other)."""
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.translation + self.translation)

    def matrix(self) -> np.ndarray:
        """4x4 row-major homogeneous camera-to-world matrix."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @staticmethod
    def from_matrix(m: np.ndarray) -> "Pose":
        m = np.asarray(m, dtype=np.float64).reshape(4, 4)
        if np.abs(m[3] - np.array([0.0, 0.0, 0.0, 1.0])).max() > 1e-12:
            raise ValueError("last row of a rigid transform must be [0, 0, 0, 1]")
        return Pose(m[:3, :3], m[:3, 3])


def rotation_about_y(angle: float) -> np.ndarray:
    """Rotation matrix about the cylinder (+y) axis."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    """Unit quaternions (..., 4) in (w, x, y, z) order to rotation matrices (..., 3, 3)."""
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    m = np.empty(q.shape[:-1] + (3, 3), dtype=np.float64)
    m[..., 0, 0] = 1 - 2 * (y * y + z * z)
    m[..., 0, 1] = 2 * (x * y - w * z)
    m[..., 0, 2] = 2 * (x * z + w * y)
    m[..., 1, 0] = 2 * (x * y + w * z)
    m[..., 1, 1] = 1 - 2 * (x * x + z * z)
    m[..., 1, 2] = 2 * (y * z - w * x)
    m[..., 2, 0] = 2 * (x * z - w * y)
    m[..., 2, 1] = 2 * (y * z + w * x)
    m[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def wrap_u(u: np.ndarray, width: int) -> np.ndarray:
    """Wrap continuous pixel u-coordinates into [0, W) with floor-mod."""
    return np.mod(u, width)


def u_distance(u1: np.ndarray, u2: np.ndarray, width: int) -> np.ndarray:
    """Signed minimal horizontal pixel distance u1 - u2 on the wrapped axis."""
    return (np.asarray(u1) - np.asarray(u2) + width / 2.0) % width - width / 2.0


# ---------------------------------------------------------------------------
# Equirectangular projection
# ---------------------------------------------------------------------------

def equirect_project(points: np.ndarray, dims: ImageDims) -> np.ndarray:
    """Project Cartesian points (..., 3) to pixel coordinates (..., 2).

    u = W/(2*pi) * (atan2(x, z) + pi), wrapped to [0, W);
    v = H/pi * (atan2(y, sqrt(x^2+z^2)) + pi/2), in [0, H].

    Raises ValueError("degenerate direction") if any point is the origin.
    """
    p = np.asarray(points, dtype=np.float64)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    if np.any((x == 0) & (y == 0) & (z == 0)):
        raise ValueError("degenerate direction")
    az = np.arctan2(x, z)
    # resolve the atan2(0, -c) tie to +pi so theta = 0 lands exactly on u = W -> 0
    az = np.where((x == 0) & (z < 0), np.pi, az)
    u = wrap_u(dims.width / _TWO_PI * (az + np.pi), dims.width)
    v = dims.height / np.pi * (np.arctan2(y, np.hypot(x, z)) + np.pi / 2.0)
    return np.stack([u, np.clip(v, 0.0, dims.height)], axis=-1)


def equirect_unproject(pixels: np.ndarray, depth: np.ndarray, dims: ImageDims) -> np.ndarray:
    """Lift pixel coordinates (..., 2) and Euclidean depths (...,) to 3D points.

    Inverse of equirect_project: the result has norm == depth and projects
    back to the input pixel (away from the poles).
    """
    px = np.asarray(pixels, dtype=np.float64)
    d = np.asarray(depth, dtype=np.float64)
    if np.any(d <= 0):
        raise ValueError("depth must be positive")
    az = px[..., 0] * _TWO_PI / dims.width - np.pi
    lat = px[..., 1] * np.pi / dims.height - np.pi / 2.0
    cl = np.cos(lat)
    direction = np.stack([cl * np.sin(az), np.sin(lat), cl * np.cos(az)], axis=-1)
    return direction * d[..., None]


def equirect_jacobian(points: np.ndarray, dims: ImageDims) -> np.ndarray:
    """2x3 Jacobians (px/m) of equirect_project at Cartesian points (..., 3).

    Rows are (du/dxyz, dv/dxyz). Raises ValueError("polar singularity")
    when x^2 + z^2 <= POLAR_EPS for any point.
    """
    p = np.asarray(points, dtype=np.float64)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    rho2 = x * x + z * z
    if np.any(rho2 <= POLAR_EPS):
        raise ValueError("polar singularity")
    rho = np.sqrt(rho2)
    r2 = rho2 + y * y
    cu = dims.width / _TWO_PI
    cv = dims.height / np.pi
    J = np.empty(p.shape[:-1] + (2, 3), dtype=np.float64)
    J[..., 0, 0] = cu * z / rho2
    J[..., 0, 1] = 0.0
    J[..., 0, 2] = -cu * x / rho2
    J[..., 1, 0] = -cv * x * y / (r2 * rho)
    J[..., 1, 1] = cv * rho / r2
    J[..., 1, 2] = -cv * z * y / (r2 * rho)
    return J


# ---------------------------------------------------------------------------
# Cylindrical coordinates
# ---------------------------------------------------------------------------

def cyl_to_cart(cyl: np.ndarray, offset: np.ndarray | None = None) -> np.ndarray:
    """Cylindrical (r, theta, z) plus optional offsets (dr, dt, dz) to Cartesian.

    x = -(r+dr)*sin(theta+dt), y = z+dz, z = -(r+dr)*cos(theta+dt).
    Raises ValueError on negative effective radius r + dr.
    """
    c = np.asarray(cyl, dtype=np.float64)
    r, th, z = c[..., 0], c[..., 1], c[..., 2]
    if offset is not None:
        d = np.asarray(offset, dtype=np.float64)
        r, th, z = r + d[..., 0], th + d[..., 1], z + d[..., 2]
    if np.any(r < 0):
        raise ValueError("negative effective radius")
    return np.stack([-r * np.sin(th), z, -r * np.cos(th)], axis=-1)


def cart_to_cyl(points: np.ndarray) -> np.ndarray:
    """Cartesian points (..., 3) to cylindrical (r, theta, z), theta in [0, 2*pi).

    On-axis points (x = z = 0) get theta = 0 by convention.
    """
    p = np.asarray(points, dtype=np.float64)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    r = np.hypot(x, z)
    th = np.mod(np.arctan2(-x, -z), _TWO_PI)
    th = np.where(r == 0, 0.0, th)
    return np.stack([r, th, y], axis=-1)


def cyl_jacobian(cyl: np.ndarray, offset: np.ndarray | None = None) -> np.ndarray:
    """3x3 Jacobians of cyl_to_cart w.r.t. (r, theta, z) at (..., 3) inputs.

    det = r + dr exactly; column order matches the (r, theta, z) axes.
    """
    c = np.asarray(cyl, dtype=np.float64)
    r, th = c[..., 0], c[..., 1]
    if offset is not None:
        d = np.asarray(offset, dtype=np.float64)
        r, th = r + d[..., 0], th + d[..., 1]
    if np.any(r < 0):
        raise ValueError("negative effective radius")
    s, co = np.sin(th), np.cos(th)
    J = np.zeros(np.broadcast(r, th).shape + (3, 3), dtype=np.float64)
    J[..., 0, 0] = -s
    J[..., 0, 1] = -r * co
    J[..., 1, 2] = 1.0
    J[..., 2, 0] = -co
    J[..., 2, 1] = r * s
    return J


def transform_scale(s_local: np.ndarray, J: np.ndarray) -> np.ndarray:
    """Map local per-axis scales (..., 3) to Cartesian via elementwise |J|.

    s_cart = |J| @ s_local where |J| takes absolute values entrywise.
    Raises ValueError on non-positive scales.
    """
    s = np.asarray(s_local, dtype=np.float64)
    if np.any(s <= 0):
        raise ValueError("scale components must be positive")
    return np.einsum("...ij,...j->...i", np.abs(np.asarray(J, dtype=np.float64)), s)


# ---------------------------------------------------------------------------
# Spherical coordinates (used by the coordinate-system benchmark)
# ---------------------------------------------------------------------------

def sph_to_cart(sph: np.ndarray) -> np.ndarray:
    """Spherical (rho, phi, psi) to Cartesian; phi is polar from +y, psi azimuth.

    x = -rho*sin(phi)*sin(psi), y = rho*cos(phi), z = -rho*sin(phi)*cos(psi),
    so psi agrees with the cylindrical theta for any point off the axis.
    """
    s = np.asarray(sph, dtype=np.float64)
    rho, phi, psi = s[..., 0], s[..., 1], s[..., 2]
    if np.any(rho < 0):
        raise ValueError("negative radius")
    sp = np.sin(phi)
    return np.stack([-rho * sp * np.sin(psi), rho * np.cos(phi), -rho * sp * np.cos(psi)], axis=-1)


def cart_to_sph(points: np.ndarray) -> np.ndarray:
    """Cartesian points to spherical (rho, phi, psi); on-axis psi = 0."""
    p = np.asarray(points, dtype=np.float64)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    rho_xz = np.hypot(x, z)
    rho = np.hypot(rho_xz, y)
    phi = np.arctan2(rho_xz, y)
    psi = np.where(rho_xz == 0, 0.0, np.mod(np.arctan2(-x, -z), _TWO_PI))
    return np.stack([rho, phi, psi], axis=-1)


def sph_jacobian(sph: np.ndarray) -> np.ndarray:
    """3x3 Jacobians of sph_to_cart w.r.t. (rho, phi, psi); |det| = rho^2*sin(phi)."""
    s = np.asarray(sph, dtype=np.float64)
    rho, phi, psi = s[..., 0], s[..., 1], s[..., 2]
    sf, cf = np.sin(phi), np.cos(phi)
    sp, cp = np.sin(psi), np.cos(psi)
    J = np.empty(np.broadcast(rho, phi, psi).shape + (3, 3), dtype=np.float64)
    J[..., 0, 0] = -sf * sp
    J[..., 0, 1] = -rho * cf * sp
    J[..., 0, 2] = -rho * sf * cp
    J[..., 1, 0] = cf
    J[..., 1, 1] = -rho * sf
    J[..., 1, 2] = 0.0
    J[..., 2, 0] = -sf * cp
    J[..., 2, 1] = -rho * cf * cp
    J[..., 2, 2] = rho * sf * sp
    return J
