"""Per-utterance encoding with a pretrained model, pooled back to corpus tokens.

Every utterance is wrapped in the model's sentinel tokens and encoded on its
own; subword vectors are pooled (mean by default) onto the pre-tokenized
corpus tokens, sentinels are dropped, and utterance matrices are concatenated
in order.  Tokens the tokenizer dissolves into nothing fall back to the
unknown-token vector and are logged, or raise under ``strict``.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .corpusio import CorpusEntry, read_corpus
from .dqem import FormatError, read_embedding_file, write_embedding_file

logger = logging.getLogger("dqembed")

POOLINGS = ("mean", "max", "first")


class AlignmentError(ValueError):
    """A corpus token could not be aligned with any subword."""


def _pool(block: np.ndarray, pooling: str) -> np.ndarray:
    if pooling == "mean":
        return block.mean(axis=0)
    if pooling == "max":
        return block.max(axis=0)
    return block[0]


def encode_entry(entry: CorpusEntry, tokenizer, model, pooling: str = "mean",
                 strict: bool = False) -> np.ndarray:
    """(N, d) float32 matrix for one dialogue, utterances encoded separately."""
    import torch

    pieces = []
    for ui, sentence in enumerate(entry.sentences):
        subword_lists = []
        for ti, token in enumerate(sentence):
            subwords = tokenizer.tokenize(token)
            if not subwords:
                message = (f"{entry.doc_id}: utterance {ui} token {ti} "
                           f"({token!r}) produced no subwords")
                if strict:
                    raise AlignmentError(message)
                logger.warning("%s; using the unknown-token vector", message)
                subwords = [tokenizer.unk_token]
            subword_lists.append(subwords)
        flat = [s for subwords in subword_lists for s in subwords]
        ids = tokenizer.convert_tokens_to_ids(
            [tokenizer.cls_token, *flat, tokenizer.sep_token])
        max_len = getattr(model.config, "max_position_embeddings", None)
        if max_len is not None and len(ids) > max_len:
            raise AlignmentError(
                f"{entry.doc_id}: utterance {ui} needs {len(ids)} positions, "
                f"model allows {max_len}")
        with torch.no_grad():
            hidden = model(input_ids=torch.tensor([ids])).last_hidden_state[0]
        hidden = hidden.numpy()
        rows = np.empty((len(sentence), hidden.shape[1]), dtype=np.float32)
        offset = 1  # skip the leading sentinel
        for ti, subwords in enumerate(subword_lists):
            rows[ti] = _pool(hidden[offset:offset + len(subwords)], pooling)
            offset += len(subwords)
        pieces.append(rows)
    return np.concatenate(pieces, axis=0)


def export_corpus(corpus_path: str | Path, model_name: str, out_path: str | Path,
                  pooling: str = "mean", expected_dim: int | None = None,
                  strict: bool = False) -> int:
    """Encode a whole corpus into a DQEM file; returns the dialogue count."""
    if pooling not in POOLINGS:
        raise ValueError(f"pooling must be one of {POOLINGS}, got {pooling!r}")
    from transformers import AutoModel, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(model_name)
    model = AutoModel.from_pretrained(model_name)
    model.eval()
    dim = model.config.hidden_size
    if expected_dim is not None and dim != expected_dim:
        raise FormatError(f"model hidden size {dim} != requested dimension "
                          f"{expected_dim}")
    entries = read_corpus(corpus_path)
    items = []
    for entry in entries:
        rows = encode_entry(entry, tokenizer, model, pooling=pooling, strict=strict)
        items.append((entry.doc_id, rows))
        logger.info("%s: %d tokens encoded", entry.doc_id, rows.shape[0])
    write_embedding_file(out_path, dim, items)
    return len(items)


def verify(corpus_path: str | Path, embedding_path: str | Path,
           expected_dim: int | None = None) -> list[str]:
    """Cross-check an embedding file against a corpus; returns problems."""
    problems: list[str] = []
    dim, rows_by_id = read_embedding_file(embedding_path)
    if expected_dim is not None and dim != expected_dim:
        problems.append(f"embedding dimension {dim} != expected {expected_dim}")
    entries = {e.doc_id: e for e in read_corpus(corpus_path)}
    for doc_id, entry in entries.items():
        if doc_id not in rows_by_id:
            problems.append(f"{doc_id}: missing from embedding file")
        elif rows_by_id[doc_id].shape[0] != entry.n_tokens:
            problems.append(f"{doc_id}: embedding file has "
                            f"{rows_by_id[doc_id].shape[0]} rows, corpus has "
                            f"{entry.n_tokens} tokens")
    for doc_id in rows_by_id:
        if doc_id not in entries:
            problems.append(f"{doc_id}: present in embedding file but not in corpus")
    return problems
