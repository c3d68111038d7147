"""Minimal corpus reading: just the ids and token arrays the exporter needs."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


@dataclass
class CorpusEntry:
    doc_id: str
    sentences: list[list[str]]

    @property
    def n_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)


def read_corpus(path: str | Path) -> list[CorpusEntry]:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, list):
        raise ValueError(f"{path}: corpus file must be a JSON array")
    entries = []
    for i, record in enumerate(data):
        if not isinstance(record, dict) or "doc_id" not in record:
            raise ValueError(f"{path}: record {i} has no doc_id")
        sentences = record.get("sentences")
        if (not isinstance(sentences, list) or not sentences
                or not all(isinstance(s, list) and s for s in sentences)):
            raise ValueError(f"{record['doc_id']}: sentences must be non-empty "
                             "token arrays")
        entries.append(CorpusEntry(doc_id=str(record["doc_id"]), sentences=sentences))
    return entries
