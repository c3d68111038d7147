import json

import pytest
import torch
from transformers import BertConfig, BertModel, BertTokenizer

UNIT_CORPUS = [
    {
        "doc_id": "u1",
        "sentences": [["the", "alpha", "processor", "is", "great", "."],
                      ["really", "great", "."]],
        "replies": [-1, 0],
        "speakers": [0, 1],
        "targets": [[1, 2, "alpha"]], "aspects": [[2, 3, "processor"]],
        "opinions": [[4, 5, "great"]],
        "quadruples": [[1, 2, 2, 3, 4, 5, "pos", "alpha", "processor", "great"]],
    },
    {
        "doc_id": "u2",
        "sentences": [["battery", "runs", "low", "."]],
        "replies": [-1],
        "speakers": [0],
        "targets": [], "aspects": [], "opinions": [], "quadruples": [],
    },
]

VOCAB_EXTRA = ["pro", "##ces", "##sor", "really", "battery", "runs", "low"]


def corpus_tokens(records):
    seen = []
    for record in records:
        for sentence in record["sentences"]:
            for token in sentence:
                if token not in seen and token != "processor":
                    seen.append(token)
    return seen


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    """A local wordpiece model small enough to run everywhere."""
    root = tmp_path_factory.mktemp("tinybert")
    from diaquad.corpus import bundled_corpus_path
    overfit = json.loads(bundled_corpus_path("overfit8.json").read_text())
    vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    vocab += corpus_tokens(UNIT_CORPUS) + VOCAB_EXTRA
    vocab += [t for t in corpus_tokens(overfit) if t not in vocab]
    (root / "vocab.txt").write_text("\n".join(vocab))
    config = BertConfig(vocab_size=len(vocab), hidden_size=32, num_hidden_layers=2,
                        num_attention_heads=2, intermediate_size=64,
                        max_position_embeddings=48)
    torch.manual_seed(1234)
    model = BertModel(config)
    model.save_pretrained(root)
    BertTokenizer(str(root / "vocab.txt")).save_pretrained(root)
    return str(root)


@pytest.fixture()
def unit_corpus_path(tmp_path):
    path = tmp_path / "unit_corpus.json"
    path.write_text(json.dumps(UNIT_CORPUS))
    return str(path)
