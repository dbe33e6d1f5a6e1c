"""Snapshot files.

JSON lines: one object ``{"points": [[x, (y)], ...], "replica": r, "t": t}``
per (replica, snapshot time), replica-major.

Binary: the same records back to back, each a 16-byte little-endian header
(magic ``b"VS"``, d as uint16, point count as uint32, L as float64), the
snapshot time as float64, then ``count * d`` float64 coordinates.  Records
appear in the same order as in the JSON-lines file.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"VS"
_HEADER = struct.Struct("<2sHId")


def write_jsonl(path: str | Path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for replica, t, pts in records:
            rec = {"replica": int(replica), "t": float(t), "points": np.asarray(pts, dtype=float).tolist()}
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_jsonl(path: str | Path) -> list:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                out.append((rec["replica"], rec["t"], np.asarray(rec["points"], dtype=float)))
    return out


def write_binary(path: str | Path, records, d: int, L: float) -> None:
    with open(path, "wb") as fh:
        for _, t, pts in records:
            arr = np.asarray(pts, dtype="<f8").reshape(-1, d)
            fh.write(_HEADER.pack(MAGIC, d, len(arr), float(L)))
            fh.write(struct.pack("<d", float(t)))
            fh.write(arr.tobytes())


def read_binary(path: str | Path) -> list:
    data = Path(path).read_bytes()
    out, pos = [], 0
    while pos < len(data):
        magic, d, count, L = _HEADER.unpack_from(data, pos)
        if magic != MAGIC:
            raise ValueError(f"bad record magic at byte {pos}")
        pos += _HEADER.size
        (t,) = struct.unpack_from("<d", data, pos)
        pos += 8
        arr = np.frombuffer(data, dtype="<f8", count=count * d, offset=pos).reshape(count, d)
        pos += 8 * count * d
        out.append((t, L, arr.copy()))
    return out
