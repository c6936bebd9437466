"""Versioned binary container for parameter checkpoints.

Layout (all integers little-endian uint32):
    magic "IMML1" (5 bytes)
    per tensor: name_len, name (UTF-8), rank, dims[rank], float32 data
Records repeat until EOF. Values are stored as little-endian float32
regardless of in-memory dtype.
"""

import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .tensor import ParamSet

MAGIC = b"IMML1"


def save_tensors(tensors, path) -> None:
    """Write a name->array mapping (or ParamSet) to `path`."""
    if isinstance(tensors, ParamSet):
        tensors = tensors.to_arrays()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        for name, value in tensors.items():
            encoded = name.encode("utf-8")
            # asarray, not ascontiguousarray: the latter promotes 0-d to 1-d
            arr = np.asarray(value, dtype="<f4", order="C")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_tensors(path) -> dict[str, np.ndarray]:
    """Read a container written by save_tensors; inverse up to float32 cast."""
    data = Path(path).read_bytes()
    if data[: len(MAGIC)] != MAGIC:
        raise FormatError(
            f"bad checkpoint magic in {path}: expected {MAGIC!r}, got {data[:len(MAGIC)]!r}"
        )
    offset = len(MAGIC)
    out: dict[str, np.ndarray] = {}

    def take(count: int, what: str) -> bytes:
        nonlocal offset
        if offset + count > len(data):
            raise FormatError(f"truncated checkpoint {path}: expected {what} at byte {offset}")
        chunk = data[offset : offset + count]
        offset += count
        return chunk

    while offset < len(data):
        (name_len,) = struct.unpack("<I", take(4, "name length"))
        name = take(name_len, "name").decode("utf-8")
        (rank,) = struct.unpack("<I", take(4, "rank"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, "dims"))
        count = int(np.prod(dims, dtype=np.int64)) if rank else 1
        raw = take(4 * count, f"data for '{name}'")
        out[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).astype(np.float32)
    return out
