"""Flat-file artifacts: CSV tables and schema-versioned JSON summaries.

CSV layouts
    field       x[,y],value
    trajectory  t,x[,y],value      (long format, one row per time and grid point)
    trace       t,<column>...
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .kernel_domain import Domain

SCHEMA_VERSION = 1


def _coords(domain: Domain) -> tuple[list[str], np.ndarray]:
    names = ["x", "y"][: domain.dim]
    return names, domain.points()


def write_field_csv(path, domain: Domain, values: np.ndarray) -> Path:
    names, pts = _coords(domain)
    data = np.column_stack([pts, np.asarray(values, dtype=float).ravel()])
    path = Path(path)
    np.savetxt(path, data, delimiter=",", header=",".join(names + ["value"]), comments="", fmt="%.17g")
    return path


def write_trajectory_csv(path, domain: Domain, times, values, stride: int = 1) -> Path:
    """Long-format table of ``values[k]`` (grid-shaped) at ``times[k]``, every ``stride``-th time."""
    names, pts = _coords(domain)
    times = np.asarray(times)[::stride]
    values = np.asarray(values)[::stride]
    npts = pts.shape[0]
    rows = np.column_stack(
        [np.repeat(times, npts), np.tile(pts, (times.size, 1)), values.reshape(times.size, npts).ravel()]
    )
    path = Path(path)
    np.savetxt(path, rows, delimiter=",", header=",".join(["t"] + names + ["value"]), comments="", fmt="%.17g")
    return path


def write_trace_csv(path, times, columns: dict[str, np.ndarray]) -> Path:
    data = np.column_stack([np.asarray(times, dtype=float)] + [np.asarray(c, dtype=float) for c in columns.values()])
    path = Path(path)
    np.savetxt(path, data, delimiter=",", header=",".join(["t"] + list(columns)), comments="", fmt="%.17g")
    return path


def read_csv(path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip().split(",")
    return header, np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def write_json(path, payload: dict, kind: str) -> Path:
    doc = {"schema_version": SCHEMA_VERSION, "kind": kind, **_jsonable(payload)}
    path = Path(path)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())
