"""Sample files: JSONL records and a compact little-endian binary layout.

Binary layout::

    bytes 0-3   magic b"RHS1"
    bytes 4-7   d      (uint32, little endian)
    bytes 8-15  count  (uint64, little endian)
    then        count*d float64 values (row-major x), then count int8 labels
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ArgumentError
from .instances import LabeledOracle, derive_seed

MAGIC = b"RHS1"
_HEADER = struct.Struct("<4sIQ")


def _check(X, y):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y).astype(np.int8).ravel()
    if len(X) != len(y):
        raise ArgumentError("X and y lengths differ")
    if not np.all(np.isin(y, (-1, 1))):
        raise ArgumentError("labels must be +1 or -1")
    return X, y


def write_jsonl(path, X, y) -> None:
    X, y = _check(X, y)
    with open(path, "w", encoding="utf-8") as fh:
        for row, label in zip(X.tolist(), y.tolist()):
            fh.write(json.dumps({"x": row, "y": label}) + "\n")


def read_jsonl(path):
    rows, labels = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                rows.append([float(v) for v in rec["x"]])
                labels.append(int(rec["y"]))
            except (ValueError, KeyError, TypeError) as exc:
                raise ArgumentError(f"{path}:{lineno}: malformed sample record ({exc})") from exc
    if not rows:
        raise ArgumentError(f"{path}: no samples")
    if len({len(r) for r in rows}) != 1:
        raise ArgumentError(f"{path}: records have differing dimensions")
    return _check(np.array(rows), np.array(labels))


def write_binary(path, X, y) -> None:
    X, y = _check(X, y)
    n, d = X.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, d, n))
        fh.write(np.ascontiguousarray(X, dtype="<f8").tobytes())
        fh.write(y.astype("i1").tobytes())


def read_binary(path):
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ArgumentError(f"{path}: truncated header")
    magic, d, n = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ArgumentError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + n * d * 8 + n
    if len(data) != expected:
        raise ArgumentError(f"{path}: expected {expected} bytes, found {len(data)}")
    off = _HEADER.size
    X = np.frombuffer(data, dtype="<f8", count=n * d, offset=off).reshape(n, d).astype(float)
    y = np.frombuffer(data, dtype="i1", count=n, offset=off + n * d * 8).astype(np.int8)
    return _check(X, y)


def read_samples(path, fmt: Optional[str] = None):
    fmt = fmt or ("bin" if str(path).endswith(".bin") else "jsonl")
    return read_binary(path) if fmt == "bin" else read_jsonl(path)


def write_samples(path, X, y, fmt: str = "jsonl") -> None:
    if fmt == "bin":
        write_binary(path, X, y)
    elif fmt == "jsonl":
        write_jsonl(path, X, y)
    else:
        raise ArgumentError(f"unknown sample format {fmt!r}")


class SampleFileOracle(LabeledOracle):
    """Draws rows uniformly with replacement from a fixed sample set."""

    def __init__(self, X, y, seed: int = 0, source: str = ""):
        X, y = _check(X, y)
        super().__init__(X.shape[1], seed)
        self.X = X
        self.y = y
        self.source = source

    def _draw(self, n):
        idx = self.rng.integers(0, len(self.y), size=n)
        return self.X[idx], self.y[idx]

    def clone(self, stream: int) -> "SampleFileOracle":
        return SampleFileOracle(self.X, self.y, derive_seed(self.seed, stream), self.source)

    def spec(self) -> dict:
        return {"kind": "file", "d": self.d, "source": self.source, "rows": int(len(self.y))}
