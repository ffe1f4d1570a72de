"""Seeded-sketch vector binary format.

Frame layout, little-endian throughout:

    offset 0   4 bytes   magic "SKVB"
    offset 4   1 byte    version, currently 0x01
    offset 5   1 byte    dtype code: 0 = float32, 1 = float64
    offset 6   8 bytes   element count (unsigned)
    offset 14  payload   raw little-endian values

Frames may be concatenated back to back in one stream or file.
"""

from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np

MAGIC = b"SKVB"
VERSION = 1
_HEADER = struct.Struct("<4sBBQ")

_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODE_FOR = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


def dump_vector(arr) -> bytes:
    """Encode one 1-D float vector as a frame."""
    arr = np.asarray(arr)
    if arr.ndim != 1:
        raise ValueError("only 1-D vectors are framed")
    code = _CODE_FOR.get(arr.dtype.newbyteorder("="))
    if code is None:
        raise ValueError(f"unsupported dtype {arr.dtype}")
    payload = np.ascontiguousarray(arr, dtype=_DTYPE_CODES[code]).tobytes()
    return _HEADER.pack(MAGIC, VERSION, code, arr.size) + payload


def load_vector(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Decode the frame at ``offset``; returns (vector, next offset)."""
    if len(buf) - offset < _HEADER.size:
        raise ValueError("truncated header")
    magic, version, code, count = _HEADER.unpack_from(buf, offset)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"unsupported version {version}")
    dtype = _DTYPE_CODES.get(code)
    if dtype is None:
        raise ValueError(f"unknown dtype code {code}")
    start = offset + _HEADER.size
    end = start + count * dtype.itemsize
    if end > len(buf):
        raise ValueError("truncated payload")
    vec = np.frombuffer(buf, dtype=dtype, count=count, offset=start)
    return vec.astype(dtype.newbyteorder("="), copy=True), end


def load_all(buf: bytes) -> list[np.ndarray]:
    out = []
    offset = 0
    while offset < len(buf):
        vec, offset = load_vector(buf, offset)
        out.append(vec)
    return out


def write_vector(fp: BinaryIO, arr) -> None:
    fp.write(dump_vector(arr))


def read_vector(fp: BinaryIO) -> np.ndarray | None:
    """Read one frame; None at a clean end of stream."""
    head = fp.read(_HEADER.size)
    if not head:
        return None
    if len(head) < _HEADER.size:
        raise ValueError("truncated header")
    magic, version, code, count = _HEADER.unpack(head)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"unsupported version {version}")
    dtype = _DTYPE_CODES.get(code)
    if dtype is None:
        raise ValueError(f"unknown dtype code {code}")
    payload = fp.read(count * dtype.itemsize)
    if len(payload) < count * dtype.itemsize:
        raise ValueError("truncated payload")
    vec = np.frombuffer(payload, dtype=dtype, count=count)
    return vec.astype(dtype.newbyteorder("="), copy=True)


def read_all(fp: BinaryIO) -> list[np.ndarray]:
    out = []
    while True:
        vec = read_vector(fp)
        if vec is None:
            return out
        out.append(vec)
