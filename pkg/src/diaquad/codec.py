"""Bidirectional mapping between quadruple sets and grid-label matrices.

Three N x N categorical matrices carry the annotation: entity boundaries
(a span (s, e) marks cell (s, e-1) with its kind), entity pairs (head-to-head
and tail-to-tail cells linking two spans, rows indexed by the type-earlier
element: target before aspect before opinion), and polarity (written at the
head and tail cells of each target/opinion pair).

When both spans of a pairing are single tokens the head and tail cells
coincide; the encoder then writes only the head-to-head label and the decoder
accepts it as attesting both links.  Any other same-cell collision keeps the
first-written label and bumps the grid's conflict counter.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .corpus import Dialogue, Quadruple, Span


class EntLabel(IntEnum):
    EPS = 0
    TGT = 1
    ASP = 2
    OPI = 3


class PairLabel(IntEnum):
    EPS = 0
    H2H = 1
    T2T = 2


class PolLabel(IntEnum):
    EPS = 0
    POS = 1
    NEG = 2
    OTHER = 3


ENT_NAMES = ("eps", "tgt", "asp", "opi")
PAIR_NAMES = ("eps", "h2h", "t2t")
POL_NAMES = ("eps", "pos", "neg", "other")

KIND_TO_ENT = {"target": EntLabel.TGT, "aspect": EntLabel.ASP, "opinion": EntLabel.OPI}
ENT_TO_KIND = {v: k for k, v in KIND_TO_ENT.items()}
POLARITY_TO_POL = {"pos": PolLabel.POS, "neg": PolLabel.NEG, "other": PolLabel.OTHER}
POL_TO_POLARITY = {v: k for k, v in POLARITY_TO_POL.items()}

# Type-ordered pairings: rows belong to the earlier element type.
PAIRINGS = (("target", "aspect"), ("target", "opinion"), ("aspect", "opinion"))


@dataclass
class LabelGrid:
    ent: np.ndarray
    pair: np.ndarray
    pol: np.ndarray
    conflicts: int = 0

    @property
    def n(self) -> int:
        return self.ent.shape[0]

    @classmethod
    def empty(cls, n: int) -> "LabelGrid":
        return cls(ent=np.zeros((n, n), dtype=np.int8),
                   pair=np.zeros((n, n), dtype=np.int8),
                   pol=np.zeros((n, n), dtype=np.int8))

    def to_sparse(self) -> dict:
        """JSON-friendly dump: per matrix a list of [row, col, label-name] cells."""
        out: dict = {"n": self.n}
        for key, mat, names in (("ent", self.ent, ENT_NAMES),
                                ("pair", self.pair, PAIR_NAMES),
                                ("pol", self.pol, POL_NAMES)):
            cells = [[int(r), int(c), names[mat[r, c]]]
                     for r, c in np.argwhere(mat != 0)]
            out[key] = cells
        return out

    @classmethod
    def from_sparse(cls, data: dict) -> "LabelGrid":
        grid = cls.empty(int(data["n"]))
        for key, mat, names in (("ent", grid.ent, ENT_NAMES),
                                ("pair", grid.pair, PAIR_NAMES),
                                ("pol", grid.pol, POL_NAMES)):
            for r, c, name in data.get(key, []):
                mat[r, c] = names.index(name)
        return grid


@dataclass(frozen=True)
class DecodeConfig:
    """``strict`` requires all three pair links of a triplet, ``relaxed`` only
    the target-aspect and target-opinion links.  Polarity disagreements between
    the head and tail cells always resolve toward the head."""

    pair_mode: str = "strict"
    polarity_tiebreak: str = "head"

    def __post_init__(self) -> None:
        if self.pair_mode not in ("strict", "relaxed"):
            raise ValueError(f"pair_mode must be 'strict' or 'relaxed', got {self.pair_mode!r}")
        if self.polarity_tiebreak != "head":
            raise ValueError("polarity_tiebreak is fixed to 'head'")


def _put(mat: np.ndarray, row: int, col: int, label: int, grid: LabelGrid) -> None:
    current = mat[row, col]
    if current == 0:
        mat[row, col] = label
    elif current != label:
        grid.conflicts += 1


def _pair_cells(a: Span, b: Span) -> tuple[tuple[int, int], tuple[int, int]]:
    head = (a.start, b.start)
    tail = (a.end - 1, b.end - 1)
    return head, tail


def encode(dialogue: Dialogue) -> LabelGrid:
    """Encode gold spans and quadruples into a label grid.

    Same-cell collisions keep the first gold item's label (file order) and are
    tallied on ``grid.conflicts``; changing gold data silently is not an option.
    """
    grid = LabelGrid.empty(dialogue.n_tokens)
    for kind in ("target", "aspect", "opinion"):
        for span in dialogue.gold_spans(kind):
            _put(grid.ent, span.start, span.end - 1, KIND_TO_ENT[kind], grid)
    for quad in dialogue.gold_quads:
        elements = {"target": quad.target, "aspect": quad.aspect, "opinion": quad.opinion}
        for kind, span in elements.items():
            _put(grid.ent, span.start, span.end - 1, KIND_TO_ENT[kind], grid)
        for kind_a, kind_b in PAIRINGS:
            head, tail = _pair_cells(elements[kind_a], elements[kind_b])
            _put(grid.pair, head[0], head[1], PairLabel.H2H, grid)
            if tail != head:
                _put(grid.pair, tail[0], tail[1], PairLabel.T2T, grid)
        head, tail = _pair_cells(quad.target, quad.opinion)
        label = POLARITY_TO_POL[quad.polarity]
        _put(grid.pol, head[0], head[1], label, grid)
        if tail != head:
            _put(grid.pol, tail[0], tail[1], label, grid)
    return grid


def _link_matrix(pair: np.ndarray, rows: list[Span], cols: list[Span]) -> np.ndarray:
    """Boolean matrix: rows[i] and cols[j] are linked head-to-head and
    tail-to-tail (one cell suffices when head and tail cells coincide)."""
    if not rows or not cols:
        return np.zeros((len(rows), len(cols)), dtype=bool)
    rh = np.array([s.start for s in rows])
    rt = np.array([s.end - 1 for s in rows])
    ch = np.array([s.start for s in cols])
    ct = np.array([s.end - 1 for s in cols])
    head_ok = pair[rh[:, None], ch[None, :]] == PairLabel.H2H
    coincide = (rh == rt)[:, None] & (ch == ct)[None, :]
    tail_ok = pair[rt[:, None], ct[None, :]] == PairLabel.T2T
    return head_ok & (coincide | tail_ok)


def decode(grid: LabelGrid, cfg: DecodeConfig = DecodeConfig(),
           dialogue: Dialogue | None = None) -> list[Quadruple]:
    """Recover the quadruple set a grid attests.

    Ill-formed grids never raise; they simply yield fewer quadruples.  Span
    texts are resolved when the owning dialogue is supplied, otherwise empty.
    """
    spans: dict[str, list[Span]] = {"target": [], "aspect": [], "opinion": []}
    for r, c in np.argwhere(grid.ent != 0):
        if r > c:
            continue
        kind = ENT_TO_KIND[EntLabel(grid.ent[r, c])]
        text = dialogue.span_text(int(r), int(c) + 1) if dialogue is not None else ""
        spans[kind].append(Span(start=int(r), end=int(c) + 1, kind=kind, text=text))

    targets, aspects, opinions = spans["target"], spans["aspect"], spans["opinion"]
    ta = _link_matrix(grid.pair, targets, aspects)
    to = _link_matrix(grid.pair, targets, opinions)
    ao = _link_matrix(grid.pair, aspects, opinions)

    out: dict[tuple, Quadruple] = {}
    for ti, t in enumerate(targets):
        for ai in np.flatnonzero(ta[ti]):
            for oi in np.flatnonzero(to[ti]):
                if cfg.pair_mode == "strict" and not ao[ai, oi]:
                    continue
                o = opinions[oi]
                head, tail = _pair_cells(t, o)
                label = PolLabel(grid.pol[head])
                if label == PolLabel.EPS:
                    label = PolLabel(grid.pol[tail])
                if label == PolLabel.EPS:
                    continue
                quad = Quadruple(target=t, aspect=aspects[ai], opinion=o,
                                 polarity=POL_TO_POLARITY[label])
                out.setdefault(quad.key(), quad)
    return [out[k] for k in sorted(out)]


# ---------------------------------------------------------------------------
# Round-trip fidelity
# ---------------------------------------------------------------------------

@dataclass
class DialogueFidelity:
    doc_id: str
    gold: int
    recovered: int
    missed: int
    spurious: int
    conflicts: int


@dataclass
class FidelityReport:
    entries: list[DialogueFidelity] = field(default_factory=list)

    @property
    def gold_total(self) -> int:
        return sum(e.gold for e in self.entries)

    @property
    def recovered_total(self) -> int:
        return sum(e.recovered for e in self.entries)

    @property
    def spurious_total(self) -> int:
        return sum(e.spurious for e in self.entries)

    @property
    def conflict_total(self) -> int:
        return sum(e.conflicts for e in self.entries)

    @property
    def recall(self) -> float:
        return self.recovered_total / self.gold_total if self.gold_total else 1.0

    @property
    def precision(self) -> float:
        decoded = self.recovered_total + self.spurious_total
        return self.recovered_total / decoded if decoded else 1.0

    def to_dict(self) -> dict:
        return {
            "recall": self.recall,
            "precision": self.precision,
            "gold": self.gold_total,
            "recovered": self.recovered_total,
            "spurious": self.spurious_total,
            "conflicts": self.conflict_total,
            "dialogues": [vars(e) for e in self.entries],
        }

    def to_text(self) -> str:
        lossy = [e for e in self.entries if e.missed or e.spurious]
        lines = [f"quadruples {self.gold_total}  recovered {self.recovered_total}  "
                 f"spurious {self.spurious_total}  conflicts {self.conflict_total}",
                 f"recall {self.recall:.4f}  precision {self.precision:.4f}"]
        for e in lossy:
            lines.append(f"  {e.doc_id}: missed {e.missed}, spurious {e.spurious}, "
                         f"conflicts {e.conflicts}")
        return "\n".join(lines) + "\n"


def roundtrip_report(dialogues, cfg: DecodeConfig = DecodeConfig()) -> FidelityReport:
    """Encode then decode every dialogue and account for each lost or extra quad."""
    report = FidelityReport()
    for d in dialogues:
        grid = encode(d)
        decoded = {q.key() for q in decode(grid, cfg)}
        gold = {q.key() for q in d.gold_quads}
        report.entries.append(DialogueFidelity(
            doc_id=d.id,
            gold=len(gold),
            recovered=len(gold & decoded),
            missed=len(gold - decoded),
            spurious=len(decoded - gold),
            conflicts=grid.conflicts,
        ))
    return report
