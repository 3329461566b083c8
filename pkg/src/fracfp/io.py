"""Field serialization: CSV (coordinates then value) and a compact binary layout.

Binary layout, little endian: ``int64 d``, ``int64 n``, ``float64 L``, then
``n**d`` float64 values in row-major order.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

from .spectral import Field, Grid

__all__ = [
    "write_field_csv",
    "read_field_csv",
    "write_field_binary",
    "read_field_binary",
    "sha256_file",
    "atomic_write_json",
]

_HEADER = struct.Struct("<qqd")


def write_field_csv(f: Field, path) -> Path:
    path = Path(path)
    g = f.grid
    pts = g.points()
    data = np.column_stack([pts, f.flat])
    cols = [f"x{a}" for a in range(g.dim)] + ["value"]
    header = ",".join(cols) + f"\n# dim={g.dim} n={g.n} L={g.L!r}"
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")
    return path


def read_field_csv(path) -> Field:
    path = Path(path)
    with open(path) as fh:
        fh.readline()
        meta = fh.readline().lstrip("#").split()
    kv = dict(item.split("=") for item in meta)
    g = Grid(int(kv["dim"]), int(kv["n"]), float(kv["L"]))
    data = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)
    return Field(g, data[:, -1])


def write_field_binary(f: Field, path) -> Path:
    path = Path(path)
    g = f.grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(g.dim, g.n, float(g.L)))
        fh.write(np.ascontiguousarray(f.flat, dtype="<f8").tobytes())
    return path


def read_field_binary(path) -> Field:
    raw = Path(path).read_bytes()
    d, n, L = _HEADER.unpack_from(raw, 0)
    g = Grid(int(d), int(n), float(L))
    vals = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if vals.size != g.size:
        raise ValueError(f"binary field has {vals.size} values, expected {g.size}")
    return Field(g, vals.copy())


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def atomic_write_json(obj, path) -> Path:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_default)
        fh.write("\n")
    os.replace(tmp, path)
    return path


def _default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
