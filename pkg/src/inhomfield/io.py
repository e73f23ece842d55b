"""Persistence: binary matrices and fields, JSON reports, CSV tables."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError

MATRIX_MAGIC = b"IFCOV001"
FIELD_MAGIC = b"IFFLD001"
_FIELD_HEADER = struct.Struct("<8s16sIIQQI")


def _default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if dataclasses.is_dataclass(o):
        return dataclasses.asdict(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, default=_default, sort_keys=True, indent=2)


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps(obj) + "\n")
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def write_csv(path, rows: list[dict]) -> Path:
    path = Path(path)
    rows = list(rows)
    fields = list(rows[0].keys()) if rows else []
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in rows:
            w.writerow({k: _csv_value(v) for k, v in r.items()})
    return path


def _csv_value(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# --------------------------------------------------------------- matrices

def write_matrix(path, matrix: np.ndarray, side: int) -> Path:
    """Header (magic, dimension, side), the vertex index map, then row-major float64."""
    M = np.ascontiguousarray(matrix, dtype="<f8")
    dim = M.shape[0]
    if M.shape != (dim, dim) or dim != side * side:
        raise ConfigError("matrix must be square over side^2 vertices")
    i = np.arange(dim)
    index = np.stack([i // side, i % side], axis=1).astype("<i4")
    with Path(path).open("wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(struct.pack("<QQ", dim, side))
        fh.write(index.tobytes())
        fh.write(M.tobytes())
    return Path(path)


def read_matrix(path) -> tuple[np.ndarray, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:8] != MATRIX_MAGIC:
        raise ConfigError("not a covariance matrix file")
    dim, side = struct.unpack_from("<QQ", data, 8)
    off = 24
    index = np.frombuffer(data, "<i4", 2 * dim, off).reshape(dim, 2)
    off += 8 * dim
    M = np.frombuffer(data, "<f8", dim * dim, off).reshape(dim, dim).copy()
    return M, index.copy()


def write_matrix_csv(path, matrix: np.ndarray, side: int) -> Path:
    rows = []
    M = np.asarray(matrix)
    for a in range(M.shape[0]):
        for b in range(M.shape[1]):
            rows.append({"ux": a // side, "uy": a % side, "vx": b // side, "vy": b % side,
                         "cov": float(M[a, b])})
    return write_csv(path, rows)


# ------------------------------------------------------------------ fields

def write_field(path, values: np.ndarray, model: str, seed: int, replica: int = 0,
                component: int = 0, params: dict | None = None) -> Path:
    """Binary grid stack (count, N, N) with a JSON sidecar of parameters."""
    V = np.ascontiguousarray(values, dtype="<f8")
    if V.ndim == 2:
        V = V[None]
    count, N = V.shape[0], V.shape[1]
    tag = model.encode("ascii")[:16].ljust(16, b"\0")
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(_FIELD_HEADER.pack(FIELD_MAGIC, tag, N, count, seed, replica, component))
        fh.write(V.tobytes())
    side = {"model": model, "N": N, "count": count, "seed": seed, "replica": replica,
            "component": component, "params": params or {}}
    write_json(path.with_suffix(path.suffix + ".json"), side)
    return path


def read_field(path) -> tuple[np.ndarray, dict]:
    data = Path(path).read_bytes()
    magic, tag, N, count, seed, replica, comp = _FIELD_HEADER.unpack_from(data, 0)
    if magic != FIELD_MAGIC:
        raise ConfigError("not a field file")
    V = np.frombuffer(data, "<f8", count * N * N, _FIELD_HEADER.size).reshape(count, N, N)
    head = {"model": tag.rstrip(b"\0").decode("ascii"), "N": N, "count": count,
            "seed": seed, "replica": replica, "component": comp}
    return V.copy(), head
