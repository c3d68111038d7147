"""Frozen token-embedding files (magic ``DQEM``): reading, verification, writing.

Layout, all integers little-endian: 4-byte magic, u32 format version, u32
embedding dimension, u32 dialogue count; then per dialogue a u32-length-
prefixed UTF-8 doc_id, u32 token count N, and N*d row-major float32 values.
Rows are kept as float32 so a write/read round trip is bitwise exact.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import Dialogue

MAGIC = b"DQEM"
VERSION = 1


class EmbeddingFileError(ValueError):
    """The embedding file is malformed or does not match the corpus."""


class EmbeddingStore:
    """In-memory view of an embedding file: doc_id -> (N, d) float32 rows."""

    def __init__(self, dim: int, rows_by_id: dict[str, np.ndarray]):
        self.dim = dim
        self._rows = rows_by_id

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._rows

    def __len__(self) -> int:
        return len(self._rows)

    @property
    def doc_ids(self) -> list[str]:
        return list(self._rows)

    def rows(self, doc_id: str) -> np.ndarray:
        if doc_id not in self._rows:
            raise EmbeddingFileError(f"no embeddings stored for dialogue {doc_id!r}")
        return self._rows[doc_id]


def load_embeddings(path: str | Path) -> EmbeddingStore:
    raw = Path(path).read_bytes()

    def need(count: int, offset: int, what: str) -> None:
        if offset + count > len(raw):
            raise EmbeddingFileError(f"{path}: unexpected end of file at {what}")

    need(16, 0, "header")
    if raw[:4] != MAGIC:
        raise EmbeddingFileError(f"{path}: not an embedding file (bad magic)")
    version, dim, n_dialogues = struct.unpack_from("<III", raw, 4)
    if version != VERSION:
        raise EmbeddingFileError(f"{path}: unsupported format version {version}")
    if dim <= 0:
        raise EmbeddingFileError(f"{path}: non-positive embedding dimension {dim}")
    offset = 16
    rows_by_id: dict[str, np.ndarray] = {}
    for k in range(n_dialogues):
        need(4, offset, f"dialogue {k}")
        (id_len,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        need(id_len + 4, offset, f"dialogue {k}")
        doc_id = raw[offset:offset + id_len].decode("utf-8")
        offset += id_len
        (n_tokens,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        payload = 4 * n_tokens * dim
        need(payload, offset, f"dialogue {k} ({doc_id})")
        rows = np.frombuffer(raw, dtype="<f4", count=n_tokens * dim,
                             offset=offset).reshape(n_tokens, dim)
        offset += payload
        if doc_id in rows_by_id:
            raise EmbeddingFileError(f"{path}: duplicate dialogue id {doc_id!r}")
        rows_by_id[doc_id] = rows
    return EmbeddingStore(dim=dim, rows_by_id=rows_by_id)


def write_embeddings(path: str | Path, dim: int,
                     items: Iterable[tuple[str, np.ndarray]]) -> None:
    """Write (doc_id, rows) blocks; rows are cast to little-endian float32."""
    items = list(items)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", VERSION, dim, len(items)))
        for doc_id, rows in items:
            rows = np.ascontiguousarray(rows, dtype="<f4")
            if rows.ndim != 2 or rows.shape[1] != dim:
                raise EmbeddingFileError(
                    f"{doc_id}: rows must be (N, {dim}), got {rows.shape}")
            encoded = doc_id.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", rows.shape[0]))
            fh.write(rows.tobytes())


def verify_embeddings(dialogues: Sequence[Dialogue], store: EmbeddingStore,
                      expected_dim: int | None = None) -> list[str]:
    """Cross-check a store against a corpus; returns problem descriptions."""
    problems: list[str] = []
    if expected_dim is not None and store.dim != expected_dim:
        problems.append(f"embedding dimension {store.dim} != expected {expected_dim}")
    seen = set()
    for d in dialogues:
        seen.add(d.id)
        if d.id not in store:
            problems.append(f"{d.id}: missing from embedding file")
            continue
        n = store.rows(d.id).shape[0]
        if n != d.n_tokens:
            problems.append(f"{d.id}: embedding file has {n} rows, corpus has "
                            f"{d.n_tokens} tokens")
    for doc_id in store.doc_ids:
        if doc_id not in seen:
            problems.append(f"{doc_id}: present in embedding file but not in corpus")
    return problems
