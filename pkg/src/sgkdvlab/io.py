"""On-disk formats: columnar CSV, binary dumps, path exports, run outputs.

Field/trace CSV: first column x, one column per snapshot, header row
"x,t=<time>,...", floats at full round-trip precision (17 significant
digits).  Binary dump layout (little-endian): uint64 n, float64 L, uint64 m,
float64 dt, then (m+1) x n float64 snapshot rows (row-major).  Brownian paths
export as raw float64 increments plus a JSON sidecar (seed, dt, m).  All
writes are atomic (temp file + rename in the target directory).
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .spectral import Field, Grid, SpaceTimeTrace
from .noise import BrownianPath

__all__ = [
    "fmt",
    "atomic_write_text",
    "atomic_write_bytes",
    "write_csv",
    "field_to_csv",
    "trace_to_csv",
    "trace_to_binary",
    "trace_from_binary",
    "field_to_binary",
    "field_from_binary",
    "path_to_files",
    "path_from_files",
    "write_json",
]


def fmt(x: float) -> str:
    """Full round-trip decimal form (17 significant digits)."""
    return format(float(x), ".17g")


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_csv(path, header: list, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v) if isinstance(v, float) or hasattr(v, "dtype")
                              else str(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def field_to_csv(path, f: Field) -> None:
    write_csv(path, ["x", "t=0"], zip(f.grid.nodes, f.values))


def trace_to_csv(path, tr: SpaceTimeTrace) -> None:
    header = ["x"] + [f"t={fmt(t)}" for t in tr.times]
    rows = np.column_stack([tr.grid.nodes, tr.values.T])
    write_csv(path, header, rows)


def _pack(grid: Grid, values: np.ndarray, m: int, dt: float) -> bytes:
    head = (np.array([grid.n], dtype="<u8").tobytes()
            + np.array([grid.length], dtype="<f8").tobytes()
            + np.array([m], dtype="<u8").tobytes()
            + np.array([dt], dtype="<f8").tobytes())
    return head + np.ascontiguousarray(values, dtype="<f8").tobytes()


def _unpack(data: bytes):
    n = int(np.frombuffer(data[0:8], dtype="<u8")[0])
    length = float(np.frombuffer(data[8:16], dtype="<f8")[0])
    m = int(np.frombuffer(data[16:24], dtype="<u8")[0])
    dt = float(np.frombuffer(data[24:32], dtype="<f8")[0])
    values = np.frombuffer(data[32:], dtype="<f8").reshape(m + 1, n)
    return n, length, m, dt, values


def trace_to_binary(path, tr: SpaceTimeTrace) -> None:
    m = len(tr.times) - 1
    dt = float(tr.times[1] - tr.times[0]) if m > 0 else 0.0
    atomic_write_bytes(path, _pack(tr.grid, tr.values, m, dt))


def trace_from_binary(path, t0: float = 0.0) -> SpaceTimeTrace:
    n, length, m, dt, values = _unpack(Path(path).read_bytes())
    times = t0 + dt * np.arange(m + 1) if m > 0 else np.array([t0])
    return SpaceTimeTrace(Grid(n, length), times, values.copy())


def field_to_binary(path, f: Field) -> None:
    atomic_write_bytes(path, _pack(f.grid, f.values[None, :], 0, 0.0))


def field_from_binary(path) -> Field:
    n, length, m, _dt, values = _unpack(Path(path).read_bytes())
    if m != 0:
        raise ValueError(f"expected a single-snapshot dump, found m={m}")
    return Field(Grid(n, length), values[0].copy())


def path_to_files(base, p: BrownianPath) -> None:
    """Increments as raw little-endian doubles + JSON sidecar."""
    base = Path(base)
    atomic_write_bytes(base.with_suffix(".bin"),
                       np.ascontiguousarray(p.increments, dtype="<f8").tobytes())
    write_json(base.with_suffix(".json"),
               {"seed": p.seed, "dt": p.dt, "m": p.m})


def path_from_files(base) -> BrownianPath:
    base = Path(base)
    meta = json.loads(base.with_suffix(".json").read_text())
    inc = np.frombuffer(base.with_suffix(".bin").read_bytes(), dtype="<f8")
    if len(inc) != meta["m"]:
        raise ValueError(f"sidecar says m={meta['m']} but file has {len(inc)} increments")
    return BrownianPath(meta["dt"], inc.copy(), meta["seed"])
