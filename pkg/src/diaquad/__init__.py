"""Sentiment quadruple extraction from threaded dialogues.

The pipeline: parse reply-tree dialogues (:mod:`diaquad.corpus`), derive
threads, interaction masks, and relative distances (:mod:`diaquad.structure`),
encode/decode quadruples as token-grid labels (:mod:`diaquad.codec`), score
grids with a small masked-attention model (:mod:`diaquad.scorer`), train it
(:mod:`diaquad.train`), and evaluate with exact-match F1 suites
(:mod:`diaquad.metrics`).
"""

from .codec import DecodeConfig, LabelGrid, decode, encode, roundtrip_report
from .corpus import (Dialogue, Quadruple, Span, Token, Utterance, Vocabulary,
                     build_vocabulary, corpus_stats, load_corpus, parse_dialogue,
                     validate_corpus)
from .embeddings import EmbeddingStore, load_embeddings, verify_embeddings, write_embeddings
from .metrics import MetricReport, evaluate, pair_f1, quad_f1, span_f1
from .scorer import (ModelConfig, ScoreGrids, ScorerParams, forward, load_checkpoint,
                     save_checkpoint)
from .structure import (MaskSet, RotaryMap, ThreadAssignment, assign_threads,
                        build_masks, delta_matrix, local_positions, pairwise_delta,
                        rotate)
from .train import TrainConfig, loss, predict, train_loop

__version__ = "0.1.0"

__all__ = [
    "DecodeConfig", "LabelGrid", "decode", "encode", "roundtrip_report",
    "Dialogue", "Quadruple", "Span", "Token", "Utterance", "Vocabulary",
    "build_vocabulary", "corpus_stats", "load_corpus", "parse_dialogue",
    "validate_corpus",
    "EmbeddingStore", "load_embeddings", "verify_embeddings", "write_embeddings",
    "MetricReport", "evaluate", "pair_f1", "quad_f1", "span_f1",
    "ModelConfig", "ScoreGrids", "ScorerParams", "forward", "load_checkpoint",
    "save_checkpoint",
    "MaskSet", "RotaryMap", "ThreadAssignment", "assign_threads", "build_masks",
    "delta_matrix", "local_positions", "pairwise_delta", "rotate",
    "TrainConfig", "loss", "predict", "train_loop",
    "__version__",
]
