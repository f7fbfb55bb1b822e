"""Field persistence: CSV tables, a compact binary blob, JSON sidecars.

Binary layout (little endian)::

    8 bytes   magic b"LVLFLD01"
    float64   lattice spacing h
    uint64    node count n
    n float64 values in node order
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .errors import UsageError

MAGIC = b"LVLFLD01"
_HEADER = struct.Struct("<8sdQ")


def write_field_csv(path, lat, values) -> None:
    values = np.asarray(values, dtype=float)
    if values.shape != (lat.n,):
        raise UsageError(f"field has shape {values.shape}, lattice has {lat.n} nodes")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_index", "x", "y", "value"])
        for k, ((x, y), v) in enumerate(zip(lat.points, values)):
            w.writerow([k, repr(float(x)), repr(float(y)), repr(float(v))])


def read_field_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(points, values)`` ordered by node index."""
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    order = np.argsort(rows[:, 0])
    rows = rows[order]
    return rows[:, 1:3], rows[:, 3]


def write_field_binary(path, lat, values) -> None:
    values = np.asarray(values, dtype="<f8")
    if values.shape != (lat.n,):
        raise UsageError(f"field has shape {values.shape}, lattice has {lat.n} nodes")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, lat.h, lat.n))
        fh.write(values.tobytes())


def read_field_binary(path) -> tuple[float, np.ndarray]:
    """Return ``(h, values)``."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise UsageError(f"{path}: truncated header")
    magic, h, n = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise UsageError(f"{path}: not a field blob (bad magic {magic!r})")
    body = data[_HEADER.size:]
    if len(body) != 8 * n:
        raise UsageError(f"{path}: expected {n} values, found {len(body) // 8}")
    return h, np.frombuffer(body, dtype="<f8").astype(float)


def write_measure_csv(path, lat, weights) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "weight"])
        for (x, y), v in zip(lat.points, np.asarray(weights, dtype=float)):
            w.writerow([repr(float(x)), repr(float(y)), repr(float(v))])


def to_jsonable(obj):
    """Convert numpy scalars and arrays recursively into plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    return obj


def write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(to_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_table_csv(path, rows: list[dict], columns: list[str] | None = None) -> None:
    """Write a list of dicts; column order is ``columns`` or first-seen order."""
    if columns is None:
        columns = []
        for r in rows:
            columns += [k for k in r if k not in columns]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow(to_jsonable(r))
