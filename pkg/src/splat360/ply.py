"""Binary little-endian PLY persistence for Gaussian clouds.

Disk layout (one float32 per property, in this order):
    x, y, z                      position, meters
    f_dc_0..2                    color in [0, 1] (optionally stored as
                                 inverse-sigmoid logits, off by default)
    opacity                      logit of the opacity
    scale_0..2                   natural log of the scale, meters
    rot_0..3                     quaternion (w, x, y, z); may be
                                 unnormalized on disk, normalized on load

Frame tags and per-Gaussian labels are in-memory metadata and are not
persisted. Round trips are bitwise lossless for valid float32 clouds.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .gaussians import GaussianCloud

_PROPERTIES = ("x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity",
               "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3")


class PlyParseError(ValueError):
    """Raised for malformed PLY input; carries the failing byte offset."""

    def __init__(self, message: str, byte_offset: int) -> None:
        super().__init__(f"{message} (at byte {byte_offset})")
        self.byte_offset = byte_offset


def _logit(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.float64)
    with np.errstate(divide="ignore"):
        return np.log(x) - np.log1p(-x)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def ply_write(cloud: GaussianCloud, path: str | Path, color_logit: bool = False) -> None:
    """Write a cloud to a binary little-endian splatting PLY."""
    n = len(cloud)
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property float {p}" for p in _PROPERTIES]
    header.append("end_header")

    data = np.empty((n, len(_PROPERTIES)), dtype="<f4")
    data[:, 0:3] = cloud.positions
    colors = _logit(cloud.colors) if color_logit else cloud.colors
    data[:, 3:6] = colors
    data[:, 6] = _logit(cloud.opacities)
    data[:, 7:10] = np.log(cloud.scales.astype(np.float64))
    data[:, 10:14] = cloud.rotations
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        f.write(data.tobytes())


def ply_read(path: str | Path, frame: str = "world", color_logit: bool = False) -> GaussianCloud:
    """Read a splatting PLY written by ply_write (or a compatible file).

    Rejects headers that do not match the documented property layout,
    NaN payloads, and truncated files (reporting the byte offset).
    """
    blob = Path(path).read_bytes()
    end = blob.find(b"end_header\n")
    if not blob.startswith(b"ply\n") or end < 0:
        raise PlyParseError("malformed header", 0)
    header_size = end + len(b"end_header\n")
    lines = blob[:end].decode("ascii", errors="replace").splitlines()

    if len(lines) < 3 or lines[1] != "format binary_little_endian 1.0":
        raise PlyParseError("unsupported PLY format", len(lines[0]) + 1 if lines else 0)
    if not lines[2].startswith("element vertex "):
        raise PlyParseError("missing vertex element", blob.find(b"element"))
    try:
        n = int(lines[2].split()[-1])
    except ValueError:
        raise PlyParseError("bad vertex count", blob.find(b"element")) from None
    props = [ln.split()[-1] for ln in lines[3:] if ln.startswith("property float ")]
    if tuple(props) != _PROPERTIES:
        raise PlyParseError(f"field count mismatch: expected {len(_PROPERTIES)} float "
                            f"properties, got {len(props)}", header_size)

    expected = n * len(_PROPERTIES) * 4
    if len(blob) - header_size < expected:
        raise PlyParseError("truncated file", len(blob))
    data = np.frombuffer(blob, dtype="<f4", count=n * len(_PROPERTIES),
                         offset=header_size).reshape(n, len(_PROPERTIES)).astype(np.float32)
    if np.isnan(data).any():
        bad = int(np.argwhere(np.isnan(data))[0].sum())
        raise PlyParseError("NaN payload", header_size + bad * 4)

    colors = data[:, 3:6]
    if color_logit:
        colors = _sigmoid(colors).astype(np.float32)
    opacities = _sigmoid(data[:, 6]).astype(np.float32)
    scales = np.exp(data[:, 7:10].astype(np.float64)).astype(np.float32)
    rots = data[:, 10:14].astype(np.float64)
    norms = np.linalg.norm(rots, axis=1)
    if np.any(norms == 0):
        raise PlyParseError("zero-norm quaternion", header_size)
    # renormalize only when actually off-unit, keeping round trips bitwise
    off = np.abs(norms - 1.0) > 1e-6
    rots[off] /= norms[off, None]
    return GaussianCloud(data[:, 0:3], scales, rots.astype(np.float32),
                         opacities, colors, frame)
