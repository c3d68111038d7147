"""Exact-match F1 suites: spans, pairs, quadruples, and cross-utterance breakdowns.

All scores are micro-averaged: true positives, predicted counts, and gold
counts pool over the corpus before precision/recall/F1 are formed.  Matching
is exact on token boundaries (and polarity, for the full quad score); items
are deduplicated per dialogue before counting.  Spans and pairs are projected
out of the quadruples on both sides, since prediction files carry quads only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .corpus import Dialogue

QuadTuple = tuple[int, int, int, int, int, int, str]
PAIRINGS = ("ta", "to", "ao")
LEVEL_KEYS = ("0", "1", "2", "3+")


class EvalError(ValueError):
    """Gold corpus and predictions cannot be aligned."""


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float
    tp: int = 0
    n_pred: int = 0
    n_gold: int = 0

    def as_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1,
                "tp": self.tp, "pred": self.n_pred, "gold": self.n_gold}


def prf_from_counts(tp: int, n_pred: int, n_gold: int) -> PRF:
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_gold if n_gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if tp else 0.0
    return PRF(precision=precision, recall=recall, f1=f1,
               tp=tp, n_pred=n_pred, n_gold=n_gold)


def _micro(gold_sets: Sequence[set], pred_sets: Sequence[set]) -> PRF:
    tp = sum(len(g & p) for g, p in zip(gold_sets, pred_sets))
    return prf_from_counts(tp, sum(map(len, pred_sets)), sum(map(len, gold_sets)))


# ---------------------------------------------------------------------------
# Projections from quadruples
# ---------------------------------------------------------------------------

def _span_of(quad: QuadTuple, kind: str) -> tuple[int, int]:
    i = {"target": 0, "aspect": 2, "opinion": 4}[kind]
    return (quad[i], quad[i + 1])


def _pair_of(quad: QuadTuple, pairing: str) -> tuple:
    kinds = {"ta": ("target", "aspect"), "to": ("target", "opinion"),
             "ao": ("aspect", "opinion")}[pairing]
    return (_span_of(quad, kinds[0]), _span_of(quad, kinds[1]))


def span_f1(gold: Sequence[Iterable[QuadTuple]], pred: Sequence[Iterable[QuadTuple]],
            kind: str) -> PRF:
    """Exact boundary match for one span kind, projected from quads."""
    gold_sets = [{_span_of(q, kind) for q in quads} for quads in gold]
    pred_sets = [{_span_of(q, kind) for q in quads} for quads in pred]
    return _micro(gold_sets, pred_sets)


def pair_f1(gold: Sequence[Iterable[QuadTuple]], pred: Sequence[Iterable[QuadTuple]],
            pairing: str) -> PRF:
    """Exact match of both spans of one pairing type, deduplicated per dialogue."""
    gold_sets = [{_pair_of(q, pairing) for q in quads} for quads in gold]
    pred_sets = [{_pair_of(q, pairing) for q in quads} for quads in pred]
    return _micro(gold_sets, pred_sets)


def quad_f1(gold: Sequence[Iterable[QuadTuple]],
            pred: Sequence[Iterable[QuadTuple]]) -> tuple[PRF, PRF]:
    """Micro F1 over exact quads (with polarity) and identification F1 (without)."""
    micro = _micro([set(q) for q in gold], [set(q) for q in pred])
    iden = _micro([{q[:6] for q in quads} for quads in gold],
                  [{q[:6] for q in quads} for quads in pred])
    return micro, iden


# ---------------------------------------------------------------------------
# Cross-utterance breakdown
# ---------------------------------------------------------------------------

def _tree_distances(dialogue: Dialogue) -> list[list[int]]:
    n = dialogue.n_utterances
    adj: list[list[int]] = [[] for _ in range(n)]
    for utt in dialogue.utterances:
        if utt.reply_to >= 0:
            adj[utt.index].append(utt.reply_to)
            adj[utt.reply_to].append(utt.index)
    dist = [[0] * n for _ in range(n)]
    for src in range(n):
        seen = {src}
        frontier = [src]
        d = 0
        while frontier:
            d += 1
            nxt = []
            for u in frontier:
                for v in adj[u]:
                    if v not in seen:
                        seen.add(v)
                        dist[src][v] = d
                        nxt.append(v)
            frontier = nxt
    return dist


def quad_level(dialogue: Dialogue, quad: QuadTuple, distance: str = "index") -> int:
    """Max pairwise utterance distance between the three elements.

    ``index`` uses the absolute difference of utterance indices; ``tree``
    uses path length in the reply tree.
    """
    utts = [dialogue.utterance_of_token(_span_of(quad, kind)[0])
            for kind in ("target", "aspect", "opinion")]
    if distance == "index":
        return max(abs(a - b) for a in utts for b in utts)
    if distance == "tree":
        dist = _tree_distances(dialogue)
        return max(dist[a][b] for a in utts for b in utts)
    raise ValueError(f"unknown distance mode {distance!r}")


def _bucket(level: int) -> str:
    return str(level) if level < 3 else "3+"


def cross_breakdown(dialogues: Sequence[Dialogue],
                    gold: Sequence[Iterable[QuadTuple]],
                    pred: Sequence[Iterable[QuadTuple]],
                    distance: str = "index") -> dict[str, PRF]:
    """Micro F1 per cross-utterance level bucket (0, 1, 2, >=3).

    Gold quads partition into buckets by level; predicted quads are bucketed
    by their own spans, so bucket precision reflects what was predicted at
    that range.
    """
    gold_by = {key: [set() for _ in dialogues] for key in LEVEL_KEYS}
    pred_by = {key: [set() for _ in dialogues] for key in LEVEL_KEYS}
    for i, (d, gq, pq) in enumerate(zip(dialogues, gold, pred)):
        for q in set(gq):
            gold_by[_bucket(quad_level(d, q, distance))][i].add(q)
        for q in set(pq):
            pred_by[_bucket(quad_level(d, q, distance))][i].add(q)
    return {key: _micro(gold_by[key], pred_by[key]) for key in LEVEL_KEYS}


# ---------------------------------------------------------------------------
# Full report
# ---------------------------------------------------------------------------

@dataclass
class MetricReport:
    span: dict[str, PRF]
    pair: dict[str, PRF]
    quad_micro: PRF
    quad_iden: PRF
    intra: PRF
    cross: PRF
    levels: dict[str, PRF]
    distance: str = "index"
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "span": {k: v.as_dict() for k, v in self.span.items()},
            "pair": {k: v.as_dict() for k, v in self.pair.items()},
            "quad_micro": self.quad_micro.as_dict(),
            "quad_iden": self.quad_iden.as_dict(),
            "intra": self.intra.as_dict(),
            "cross": self.cross.as_dict(),
            "levels": {k: v.as_dict() for k, v in self.levels.items()},
            "distance": self.distance,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def to_text(self) -> str:
        def row(name: str, prf: PRF) -> str:
            return (f"  {name:<12} P {prf.precision:6.4f}  R {prf.recall:6.4f}  "
                    f"F1 {prf.f1:6.4f}  ({prf.tp}/{prf.n_pred}/{prf.n_gold})")

        lines = ["span match (exact boundaries)"]
        lines += [row(k, self.span[k]) for k in ("target", "aspect", "opinion")]
        lines.append("pair extraction")
        lines += [row(k, self.pair[k]) for k in PAIRINGS]
        lines.append("quadruple extraction")
        lines.append(row("micro", self.quad_micro))
        lines.append(row("iden", self.quad_iden))
        lines.append(f"cross-utterance levels ({self.distance} distance)")
        lines.append(row("intra", self.intra))
        lines.append(row("cross", self.cross))
        for key in LEVEL_KEYS:
            label = {"0": "intra-utt", "1": "cross-1-utt",
                     "2": "cross-2-utt", "3+": "cross-3+-utt"}[key]
            lines.append(row(label, self.levels[key]))
        return "\n".join(lines) + "\n"


def evaluate(dialogues: Sequence[Dialogue], predictions: dict[str, list[QuadTuple]],
             distance: str = "index") -> MetricReport:
    """Score predictions (doc_id -> quad tuples) against the gold corpus.

    Prediction ids must be a subset of the corpus ids; dialogues without an
    entry count as predicting nothing.
    """
    known = {d.id for d in dialogues}
    unmatched = sorted(set(predictions) - known)
    if unmatched:
        raise EvalError(f"predictions reference unknown doc_ids: {', '.join(unmatched)}")
    gold = [[(q.target.start, q.target.end, q.aspect.start, q.aspect.end,
              q.opinion.start, q.opinion.end, q.polarity) for q in d.gold_quads]
            for d in dialogues]
    pred = [[tuple(q) for q in predictions.get(d.id, [])] for d in dialogues]

    levels = cross_breakdown(dialogues, gold, pred, distance)
    gold_sets = [set(q) for q in gold]
    pred_sets = [set(q) for q in pred]
    intra_gold, intra_pred, cross_gold, cross_pred = [], [], [], []
    for d, gq, pq in zip(dialogues, gold_sets, pred_sets):
        intra_gold.append({q for q in gq if quad_level(d, q, distance) == 0})
        intra_pred.append({q for q in pq if quad_level(d, q, distance) == 0})
        cross_gold.append({q for q in gq if quad_level(d, q, distance) > 0})
        cross_pred.append({q for q in pq if quad_level(d, q, distance) > 0})

    micro, iden = quad_f1(gold, pred)
    return MetricReport(
        span={k: span_f1(gold, pred, k) for k in ("target", "aspect", "opinion")},
        pair={k: pair_f1(gold, pred, k) for k in PAIRINGS},
        quad_micro=micro,
        quad_iden=iden,
        intra=_micro(intra_gold, intra_pred),
        cross=_micro(cross_gold, cross_pred),
        levels=levels,
        distance=distance,
    )


def predictions_by_id(records: list[dict]) -> dict[str, list[QuadTuple]]:
    """Index prediction records by doc_id, rejecting duplicates."""
    out: dict[str, list[QuadTuple]] = {}
    for record in records:
        doc_id = record["doc_id"]
        if doc_id in out:
            raise EvalError(f"duplicate doc_id in predictions: {doc_id}")
        out[doc_id] = [tuple(q) for q in record.get("quadruples", [])]
    return out
