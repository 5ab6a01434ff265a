"""Binary matrix files: three little-endian int64 header values (magic, rows, cols), then float64 data."""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = 0x4D41545846363401  # "MATXF64" + format 1
_HEADER = struct.Struct("<qqq")


def write_matrix(path: str | Path, array) -> None:
    a = np.ascontiguousarray(np.asarray(array, dtype="<f8"))
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise ValueError("only 1-D or 2-D arrays can be written")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, a.shape[0], a.shape[1]))
        fh.write(a.tobytes())


def read_matrix(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, rows, cols = _HEADER.unpack(head)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic:#x}")
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != rows * cols:
        raise ValueError(f"{path}: expected {rows * cols} values, found {data.size}")
    return data.reshape(rows, cols).astype(np.float64)
