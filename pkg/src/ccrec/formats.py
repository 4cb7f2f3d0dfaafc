"""CCMDL1 binary container: a key-value block plus named tensors.

Layout (all integers little-endian):

    magic "CCMDL1"
    u32 kv_len        | kv_len bytes of UTF-8 "key: value" lines
    u32 tensor_count  | tensor_count records

    record: u32 name_len | name UTF-8 | u8 dtype (0 = f32, 1 = f64)
            u32 rows | u32 cols | rows*cols values, row-major

Both the final model file and mid-training resume checkpoints use this
container; they differ only in their keys and tensor set. Writes are
atomic (temp file + rename).
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from . import kvdoc
from .errors import FormatError

MODEL_MAGIC = b"CCMDL1"
_DTYPES = {0: "<f4", 1: "<f8"}
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


def write_container(path, kv: dict, tensors: dict) -> None:
    """Atomically write kv pairs and a name->2-D-array mapping."""
    path = Path(path)
    kv_bytes = kvdoc.dumps(kv).encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MODEL_MAGIC)
            fh.write(struct.pack("<I", len(kv_bytes)))
            fh.write(kv_bytes)
            fh.write(struct.pack("<I", len(tensors)))
            for name, array in tensors.items():
                array = np.atleast_2d(np.asarray(array))
                code = _DTYPE_CODES.get(array.dtype)
                if code is None:
                    raise ValueError(f"tensor {name!r} has unsupported dtype {array.dtype}")
                encoded = name.encode("utf-8")
                fh.write(struct.pack("<I", len(encoded)))
                fh.write(encoded)
                fh.write(struct.pack("<BII", code, array.shape[0], array.shape[1]))
                fh.write(np.ascontiguousarray(array, dtype=_DTYPES[code]).tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_container(path):
    """-> (kv dict, name -> array dict)."""
    path = Path(path)
    with open(path, "rb") as fh:
        payload = fh.read()
    if payload[: len(MODEL_MAGIC)] != MODEL_MAGIC:
        raise FormatError(f'{path}: bad magic, expected "CCMDL1"')
    offset = len(MODEL_MAGIC)

    def take(fmt):
        nonlocal offset
        size = struct.calcsize(fmt)
        if offset + size > len(payload):
            raise FormatError(f"{path}: truncated container")
        values = struct.unpack_from(fmt, payload, offset)
        offset += size
        return values

    (kv_len,) = take("<I")
    if offset + kv_len > len(payload):
        raise FormatError(f"{path}: truncated kv block")
    kv = kvdoc.loads(payload[offset : offset + kv_len].decode("utf-8"))
    offset += kv_len

    (count,) = take("<I")
    tensors = {}
    for _ in range(count):
        (name_len,) = take("<I")
        if offset + name_len > len(payload):
            raise FormatError(f"{path}: truncated tensor name")
        name = payload[offset : offset + name_len].decode("utf-8")
        offset += name_len
        code, rows, cols = take("<BII")
        if code not in _DTYPES:
            raise FormatError(f"{path}: tensor {name!r} has unknown dtype code {code}")
        dtype = np.dtype(_DTYPES[code])
        nbytes = rows * cols * dtype.itemsize
        if offset + nbytes > len(payload):
            raise FormatError(f"{path}: truncated tensor {name!r}")
        data = np.frombuffer(payload, dtype=dtype, count=rows * cols, offset=offset)
        tensors[name] = data.reshape(rows, cols).copy()
        offset += nbytes
    if offset != len(payload):
        raise FormatError(f"{path}: {len(payload) - offset} trailing bytes")
    return kv, tensors
