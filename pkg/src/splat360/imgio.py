"""PNG and EXR image I/O.

PNG goes through Pillow (8-bit). EXR is handled by a built-in minimal
codec: scanline storage, NO_COMPRESSION, 32-bit float channels, either
RGB color or a single "Y" depth channel. Files written here are valid
OpenEXR 2.0 and byte-deterministic for fixed pixel data; the reader
accepts only the uncompressed float subset this package writes.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

_EXR_MAGIC = 20000630
_PT_FLOAT = 2


def write_png(path: str | Path, rgb: np.ndarray) -> None:
    """Write float RGB in [0, 1] (H, W, 3) as an 8-bit PNG."""
    arr = np.asarray(rgb, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) array, got {arr.shape}")
    data = (np.clip(arr, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(str(path), format="PNG")


def read_png(path: str | Path) -> np.ndarray:
    """Read a PNG as float64 RGB in [0, 1], shape (H, W, 3)."""
    with Image.open(str(path)) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def _attr(name: bytes, type_: bytes, payload: bytes) -> bytes:
    return name + b"\x00" + type_ + b"\x00" + struct.pack("<i", len(payload)) + payload


def write_exr(path: str | Path, image: np.ndarray) -> None:
    """Write (H, W) or (H, W, 3) float data as an uncompressed float32 EXR.

    Color images use channels R, G, B; single-channel images use "Y".
    """
    arr = np.asarray(image, dtype=np.float32)
    if arr.ndim == 2:
        channels = [("Y", arr)]
    elif arr.ndim == 3 and arr.shape[2] == 3:
        # channel list and per-scanline data must be in alphabetical order
        channels = [("B", arr[:, :, 2]), ("G", arr[:, :, 1]), ("R", arr[:, :, 0])]
    else:
        raise ValueError(f"expected (H, W) or (H, W, 3) array, got {arr.shape}")
    h, w = arr.shape[:2]

    chlist = b""
    for name, _ in channels:
        chlist += name.encode() + b"\x00"
        chlist += struct.pack("<i", _PT_FLOAT) + struct.pack("<BBBB", 0, 0, 0, 0)
        chlist += struct.pack("<ii", 1, 1)
    chlist += b"\x00"

    box = struct.pack("<iiii", 0, 0, w - 1, h - 1)
    header = b"".join([
        _attr(b"channels", b"chlist", chlist),
        _attr(b"compression", b"compression", b"\x00"),
        _attr(b"dataWindow", b"box2i", box),
        _attr(b"displayWindow", b"box2i", box),
        _attr(b"lineOrder", b"lineOrder", b"\x00"),
        _attr(b"pixelAspectRatio", b"float", struct.pack("<f", 1.0)),
        _attr(b"screenWindowCenter", b"v2f", struct.pack("<ff", 0.0, 0.0)),
        _attr(b"screenWindowWidth", b"float", struct.pack("<f", 1.0)),
        b"\x00",
    ])

    preamble = struct.pack("<ii", _EXR_MAGIC, 2) + header
    table_start = len(preamble)
    data_start = table_start + 8 * h
    line_size = 8 + 4 * w * len(channels)
    offsets = [data_start + i * line_size for i in range(h)]

    with open(path, "wb") as f:
        f.write(preamble)
        f.write(struct.pack(f"<{h}Q", *offsets))
        for y in range(h):
            row = np.concatenate([ch[y].astype("<f4") for _, ch in channels])
            f.write(struct.pack("<ii", y, 4 * w * len(channels)) + row.tobytes())


def read_exr(path: str | Path) -> np.ndarray:
    """Read an EXR written by write_exr: (H, W, 3) for RGB, (H, W) for depth."""
    blob = Path(path).read_bytes()
    magic, version = struct.unpack_from("<ii", blob, 0)
    if magic != _EXR_MAGIC:
        raise ValueError(f"{path}: not an EXR file")
    if version & 0xFF != 2 or version & 0x200:
        raise ValueError(f"{path}: unsupported EXR version/tiled layout")

    pos = 8
    channels: list[str] = []
    data_window = None
    compression = None
    while True:
        end = blob.index(b"\x00", pos)
        name = blob[pos:end].decode()
        pos = end + 1
        if name == "":
            break
        end = blob.index(b"\x00", pos)
        type_ = blob[pos:end].decode()
        pos = end + 1
        (size,) = struct.unpack_from("<i", blob, pos)
        pos += 4
        payload = blob[pos:pos + size]
        pos += size
        if name == "channels":
            p = 0
            while payload[p] != 0:
                cend = payload.index(b"\x00", p)
                cname = payload[p:cend].decode()
                (ptype,) = struct.unpack_from("<i", payload, cend + 1)
                if ptype != _PT_FLOAT:
                    raise ValueError(f"{path}: only float32 channels supported")
                channels.append(cname)
                p = cend + 1 + 16
        elif name == "dataWindow":
            data_window = struct.unpack("<iiii", payload)
        elif name == "compression":
            compression = payload[0]
        _ = type_

    if data_window is None or compression is None or not channels:
        raise ValueError(f"{path}: missing required EXR attributes")
    if compression != 0:
        raise ValueError(f"{path}: only uncompressed EXR supported")
    x0, y0, x1, y1 = data_window
    w, h = x1 - x0 + 1, y1 - y0 + 1

    offsets = struct.unpack_from(f"<{h}Q", blob, pos)
    nc = len(channels)
    out = np.empty((h, w, nc), dtype=np.float32)
    for i, off in enumerate(offsets):
        y, size = struct.unpack_from("<ii", blob, off)
        if size != 4 * w * nc:
            raise ValueError(f"{path}: bad scanline size at y={y}")
        row = np.frombuffer(blob, dtype="<f4", count=w * nc, offset=off + 8)
        out[y - y0] = row.reshape(nc, w).T

    if channels == ["B", "G", "R"]:
        return out[:, :, ::-1].copy()
    if channels == ["Y"]:
        return out[:, :, 0].copy()
    return out
