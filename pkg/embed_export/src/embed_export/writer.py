"""CCEMB1 writer.

Byte layout (little-endian): magic "CCEMB1", u32 count, u32 dim, then
count records of [u32 id byte length, id UTF-8 bytes, dim f32 values].
This mirrors the recommender's documented ingestion format exactly.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"CCEMB1"


def write_embedding_file(path, ids, matrix) -> None:
    matrix = np.asarray(matrix, dtype="<f4")
    if matrix.ndim != 2 or matrix.shape[0] != len(ids):
        raise ValueError(f"matrix shape {matrix.shape} does not match {len(ids)} ids")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", matrix.shape[0], matrix.shape[1]))
        for raw_id, row in zip(ids, matrix):
            encoded = str(raw_id).encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(row.tobytes())


def read_embedding_file(path):
    """(ids, float32 matrix); used by this package's own round-trip tests."""
    with open(path, "rb") as fh:
        payload = fh.read()
    if payload[: len(MAGIC)] != MAGIC:
        raise ValueError(f'{path}: bad magic, expected "CCEMB1"')
    count, dim = struct.unpack_from("<II", payload, len(MAGIC))
    offset = len(MAGIC) + 8
    ids = []
    matrix = np.empty((count, dim), dtype=np.float32)
    for r in range(count):
        (id_len,) = struct.unpack_from("<I", payload, offset)
        offset += 4
        ids.append(payload[offset : offset + id_len].decode("utf-8"))
        offset += id_len
        matrix[r] = np.frombuffer(payload, dtype="<f4", count=dim, offset=offset)
        offset += dim * 4
    if offset != len(payload):
        raise ValueError(f"{path}: trailing bytes")
    return ids, matrix
