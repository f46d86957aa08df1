"""Persistence: binary snapshots, monitor and report CSVs, provenance JSON.

All writers go through a temporary file in the target directory followed by
``os.replace``, so a reader never sees a half-written file.
"""
from __future__ import annotations

import contextlib
import csv
import io
import json
import os
import struct
import tempfile
import zlib
from pathlib import Path

import numpy as np

from . import __version__
from .errors import RWNSError
from .field import ComplexField, PeriodicGrid

MAGIC = b"RWNS1\0"
LITTLE = b"<"
MONITOR_COLUMNS = ("t", "mass", "energy", "momentum", "qk", "mean_phi")


class SnapshotFormatError(RWNSError):
    """Corrupt or foreign snapshot file."""


@contextlib.contextmanager
def atomic_open(path, mode="w", **kw):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, mode, **kw) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------- snapshots


def _header(grid: PeriodicGrid, time: float) -> bytes:
    # dim, endianness tag, n per axis, length per axis, time
    head = struct.pack("<Bc", grid.dim, LITTLE)
    head += struct.pack(f"<{grid.dim}I", *([grid.n] * grid.dim))
    head += struct.pack(f"<{grid.dim}d", *([grid.length] * grid.dim))
    head += struct.pack("<d", time)
    return head


def encode_snapshot(psi: ComplexField) -> bytes:
    head = _header(psi.grid, psi.time)
    payload = np.ascontiguousarray(psi.values, dtype="<c16").tobytes(order="C")
    return MAGIC + head + struct.pack("<I", zlib.crc32(head)) + payload


def decode_snapshot(blob: bytes) -> ComplexField:
    if not blob.startswith(MAGIC):
        raise SnapshotFormatError("bad magic")
    pos = len(MAGIC)
    try:
        dim, tag = struct.unpack_from("<Bc", blob, pos)
    except struct.error:
        raise SnapshotFormatError("truncated header") from None
    if tag != LITTLE:
        raise SnapshotFormatError(f"unsupported endianness tag {tag!r}")
    if dim not in (1, 2, 3):
        raise SnapshotFormatError(f"bad dimension {dim}")
    size = 2 + 4 * dim + 8 * dim + 8
    head = blob[pos : pos + size]
    if len(head) != size or len(blob) < pos + size + 4:
        raise SnapshotFormatError("truncated header")
    (crc,) = struct.unpack_from("<I", blob, pos + size)
    if crc != zlib.crc32(head):
        raise SnapshotFormatError("header checksum mismatch")
    ns = struct.unpack_from(f"<{dim}I", head, 2)
    lengths = struct.unpack_from(f"<{dim}d", head, 2 + 4 * dim)
    (time,) = struct.unpack_from("<d", head, 2 + 12 * dim)
    if len(set(ns)) != 1 or len(set(lengths)) != 1:
        raise SnapshotFormatError("anisotropic grids are not supported")
    grid = PeriodicGrid(dim, ns[0], lengths[0])
    payload = blob[pos + size + 4 :]
    if len(payload) != 16 * grid.size:
        raise SnapshotFormatError(f"payload has {len(payload)} bytes, expected {16 * grid.size}")
    values = np.frombuffer(payload, dtype="<c16").reshape(grid.shape).astype(complex)
    return ComplexField(grid, values, time)


def write_snapshot(path, psi: ComplexField) -> None:
    with atomic_open(path, "wb") as fh:
        fh.write(encode_snapshot(psi))


def read_snapshot(path) -> ComplexField:
    return decode_snapshot(Path(path).read_bytes())


def write_snapshots(out_dir, snapshots) -> list[Path]:
    out_dir = Path(out_dir)
    paths = []
    for i, s in enumerate(snapshots):
        p = out_dir / f"snap_{i:06d}.rwns"
        write_snapshot(p, s)
        paths.append(p)
    return paths


# ---------------------------------------------------------------- tables


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, columns, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    with atomic_open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))


def monitor_rows(traj):
    """Monitor table; the momentum column is the first component (1D)."""
    for t, m in zip(traj.monitor_times, traj.monitors):
        yield (t, m.mass, m.energy, float(np.ravel(m.momentum)[0]), m.qk, m.mean_phi)


def write_monitors(path, traj) -> None:
    write_csv(path, MONITOR_COLUMNS, monitor_rows(traj))


def _jsonable(obj):
    """Non-finite floats become null; numpy scalars and tuples become plain JSON."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if np.isfinite(obj) else None
    return obj


def write_json(path, obj) -> None:
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False)
    with atomic_open(path, "w") as fh:
        fh.write(text + "\n")


def provenance(config: dict, seed: int, **extra) -> dict:
    return {"code_version": __version__, "config": config, "seed": seed, **extra}
