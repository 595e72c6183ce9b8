"""Flat binary tensor files with a JSON sidecar manifest.

The .bin file is a concatenation of little-endian float32 tensors; the
sidecar <file>.json lists name, shape, and byte offset for each tensor
plus an optional free-form meta dict. Layout is stable and documented so
external tools can produce weight files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def save_tensors(path: str | Path, tensors: dict[str, np.ndarray],
                 meta: dict | None = None) -> None:
    path = Path(path)
    manifest = {"dtype": "<f4", "tensors": [], "meta": meta or {}}
    offset = 0
    with open(path, "wb") as f:
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr, dtype="<f4")
            manifest["tensors"].append({"name": name, "shape": list(arr.shape),
                                        "offset": offset})
            f.write(arr.tobytes())
            offset += arr.nbytes
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_tensors(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    manifest = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    blob = path.read_bytes()
    out = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=entry["offset"])
        out[entry["name"]] = arr.reshape(shape).copy()
    return out, manifest.get("meta", {})
