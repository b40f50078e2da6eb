"""On-disk formats: raw float64 arrays with a JSON sidecar, and 16-bit PGM renderings."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .tomography import Geometry


def save_array(arr, path, kind="image", geometry: Geometry | None = None, **meta) -> None:
    """Write <path>.bin (little-endian float64, C order) and <path>.json (shape, kind, geometry)."""
    path = Path(path)
    arr = np.asarray(arr, dtype=np.float64)
    header = {"shape": list(arr.shape), "kind": kind,
              "geometry": None if geometry is None else geometry.to_dict()}
    header.update(meta)
    path.with_suffix(".json").write_text(json.dumps(header, indent=2))
    path.with_suffix(".bin").write_bytes(arr.astype("<f8").tobytes())


def load_array(path):
    """Returns (array, header)."""
    path = Path(path)
    for suffix in (".json", ".bin"):
        if not path.with_suffix(suffix).exists():
            raise FileNotFoundError(f"missing {path.with_suffix(suffix)}")
    header = json.loads(path.with_suffix(".json").read_text())
    data = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype="<f8").astype(np.float64)
    shape = tuple(header["shape"])
    if data.size != int(np.prod(shape)):
        raise ValueError(f"{path}: {data.size} values, header declares shape {shape}")
    return data.reshape(shape), header


def header_geometry(header) -> Geometry | None:
    g = header.get("geometry")
    return None if g is None else Geometry(**g)


def write_pgm(arr, path, lo=None, hi=None) -> None:
    """Binary 16-bit PGM with values windowed linearly from [lo, hi] (default min/max) to [0, 65535]."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"PGM needs a 2-D array, got shape {arr.shape}")
    lo = float(arr.min()) if lo is None else lo
    hi = float(arr.max()) if hi is None else hi
    scale = 65535.0 / (hi - lo) if hi > lo else 0.0
    pix = np.clip(np.round((arr - lo) * scale), 0, 65535).astype(">u2")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(pix.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM as written by write_pgm (integers, no windowing undone)."""
    raw = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while not raw[end:end + 1].isspace():
            end += 1
        tokens.append(raw[pos:end].decode("ascii"))
        pos = end
    if tokens[0] != "P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    pos += 1
    dtype = ">u2" if maxval > 255 else "u1"
    return np.frombuffer(raw[pos:], dtype=dtype, count=w * h).reshape(h, w).astype(np.int64)
