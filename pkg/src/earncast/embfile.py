"""Reader/writer for the MIMEMB1 embedding-vector file format.

Layout (little-endian):

    offset  size        field
    0       8           magic bytes ``MIMEMB1\\0``
    8       4           u32 count (number of row vectors, >= 1)
    12      4           u32 dim   (components per row, >= 1)
    16      1           u8 modality code (0 = text, 1 = image)
    17      count*dim*4 IEEE-754 float32, row-major

One file per instance per modality. Text files carry a single row; image
files carry one row per slide.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"MIMEMB1\x00"
_HEADER = struct.Struct("<8sIIB")

MODALITY_TEXT = 0
MODALITY_IMAGE = 1
_MODALITY_NAMES = {MODALITY_TEXT: "text", MODALITY_IMAGE: "image"}


class EmbeddingFormatError(ValueError):
    """Raised when a file does not conform to the MIMEMB1 layout."""


def modality_name(code: int) -> str:
    try:
        return _MODALITY_NAMES[code]
    except KeyError:
        raise EmbeddingFormatError(f"unknown modality code {code}") from None


def write_embeddings(path: str | Path, rows: np.ndarray, modality: int) -> None:
    """Write a (count, dim) float array atomically (temp file then rename)."""
    rows = np.asarray(rows, dtype=np.float32)
    if rows.ndim == 1:
        rows = rows.reshape(1, -1)
    if rows.ndim != 2 or rows.shape[0] < 1 or rows.shape[1] < 1:
        raise EmbeddingFormatError(f"rows must be a non-empty 2-D array, got shape {rows.shape}")
    if modality not in _MODALITY_NAMES:
        raise EmbeddingFormatError(f"unknown modality code {modality}")
    if not np.all(np.isfinite(rows)):
        raise EmbeddingFormatError("refusing to write non-finite embedding values")

    path = Path(path)
    count, dim = rows.shape
    payload = _HEADER.pack(MAGIC, count, dim, modality) + np.ascontiguousarray(rows).tobytes()
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def read_embeddings(path: str | Path) -> tuple[np.ndarray, int]:
    """Read a MIMEMB1 file; returns (float32 rows of shape (count, dim), modality code)."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise EmbeddingFormatError(f"{path}: truncated header ({len(data)} bytes)")
    magic, count, dim, modality = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise EmbeddingFormatError(f"{path}: bad magic {magic!r}")
    if modality not in _MODALITY_NAMES:
        raise EmbeddingFormatError(f"{path}: unknown modality code {modality}")
    if count < 1 or dim < 1:
        raise EmbeddingFormatError(f"{path}: invalid count/dim ({count}, {dim})")
    expected = _HEADER.size + 4 * count * dim
    if len(data) != expected:
        raise EmbeddingFormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    rows = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(count, dim)
    if not np.all(np.isfinite(rows)):
        raise EmbeddingFormatError(f"{path}: non-finite float payload")
    return rows.copy(), modality
