"""The DQEM embedding container.

Layout (integers little-endian): 4-byte magic ``DQEM``, u32 version, u32
embedding dimension, u32 dialogue count; per dialogue a u32-length-prefixed
UTF-8 doc_id, u32 token count, then N*d row-major float32 values.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Iterable

import numpy as np

MAGIC = b"DQEM"
VERSION = 1


class FormatError(ValueError):
    pass


def write_embedding_file(path: str | Path, dim: int,
                         items: Iterable[tuple[str, np.ndarray]]) -> None:
    items = list(items)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", VERSION, dim, len(items)))
        for doc_id, rows in items:
            rows = np.ascontiguousarray(rows, dtype="<f4")
            if rows.ndim != 2 or rows.shape[1] != dim:
                raise FormatError(f"{doc_id}: expected (N, {dim}) rows, got {rows.shape}")
            encoded = doc_id.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", rows.shape[0]))
            fh.write(rows.tobytes())


def read_embedding_file(path: str | Path) -> tuple[int, dict[str, np.ndarray]]:
    """Returns (dim, doc_id -> float32 rows)."""
    raw = Path(path).read_bytes()

    def need(count: int, offset: int, what: str) -> None:
        if offset + count > len(raw):
            raise FormatError(f"{path}: unexpected end of file at {what}")

    need(16, 0, "header")
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: not an embedding file (bad magic)")
    version, dim, n_dialogues = struct.unpack_from("<III", raw, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    offset = 16
    out: dict[str, np.ndarray] = {}
    for k in range(n_dialogues):
        need(4, offset, f"dialogue {k}")
        (id_len,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        need(id_len + 4, offset, f"dialogue {k}")
        doc_id = raw[offset:offset + id_len].decode("utf-8")
        offset += id_len
        (n_tokens,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        need(4 * n_tokens * dim, offset, f"dialogue {k} ({doc_id})")
        rows = np.frombuffer(raw, dtype="<f4", count=n_tokens * dim,
                             offset=offset).reshape(n_tokens, dim)
        offset += 4 * n_tokens * dim
        out[doc_id] = rows
    return dim, out
