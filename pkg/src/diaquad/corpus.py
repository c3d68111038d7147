"""Dialogue corpus: data model, JSON reading/writing, validation, vocabulary, statistics.

A corpus file is a UTF-8 JSON array of dialogue records.  Each record carries
pre-tokenized utterances (``sentences``), the reply tree (``replies``, -1 marks
the root), per-utterance ``speakers``, gold span lists (``targets`` /
``aspects`` / ``opinions`` as ``[start, end, text]`` with end-exclusive global
token indices) and gold ``quadruples`` as
``[t_s, t_e, a_s, a_e, o_s, o_e, polarity, t_text, a_text, o_text]``.
The legacy key ``triplets`` is accepted as an alias for ``quadruples``.
"""

from __future__ import annotations

import json
from bisect import bisect_right
from collections import Counter
from dataclasses import dataclass, field
from importlib.resources import files
from pathlib import Path
from typing import Iterable, Sequence

POLARITIES = ("pos", "neg", "other")
SPAN_KINDS = ("target", "aspect", "opinion")

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_ID = 0
UNK_ID = 1


class CorpusError(ValueError):
    """A corpus record violates the on-disk schema or a structural precondition."""

    def __init__(self, doc_id: str | None, path: str, message: str):
        self.doc_id = doc_id
        self.path = path
        self.message = message
        super().__init__(f"{doc_id if doc_id is not None else '<corpus>'}: {path}: {message}")


@dataclass(frozen=True)
class Token:
    text: str
    utterance_index: int
    global_index: int


@dataclass
class Utterance:
    index: int
    speaker: int
    tokens: list[Token]
    reply_to: int

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def is_root(self) -> bool:
        return self.reply_to == -1


@dataclass(frozen=True, order=True)
class Span:
    """A contiguous token range, end-exclusive, in dialogue-global indices."""

    start: int
    end: int
    kind: str
    text: str = ""

    @property
    def bounds(self) -> tuple[int, int]:
        return (self.start, self.end)


@dataclass(frozen=True)
class Quadruple:
    target: Span
    aspect: Span
    opinion: Span
    polarity: str

    def key(self) -> tuple:
        """Structural identity: span bounds plus polarity, texts ignored."""
        return (*self.target.bounds, *self.aspect.bounds, *self.opinion.bounds, self.polarity)

    def triple_key(self) -> tuple:
        return (*self.target.bounds, *self.aspect.bounds, *self.opinion.bounds)


@dataclass
class Dialogue:
    id: str
    utterances: list[Utterance]
    gold_targets: list[Span] = field(default_factory=list)
    gold_aspects: list[Span] = field(default_factory=list)
    gold_opinions: list[Span] = field(default_factory=list)
    gold_quads: list[Quadruple] = field(default_factory=list)

    def __post_init__(self) -> None:
        offsets = [0]
        for utt in self.utterances:
            offsets.append(offsets[-1] + len(utt))
        self._offsets = offsets

    @property
    def n_tokens(self) -> int:
        return self._offsets[-1]

    @property
    def n_utterances(self) -> int:
        return len(self.utterances)

    @property
    def utterance_offsets(self) -> list[int]:
        """Global index of the first token of each utterance (plus a final sentinel)."""
        return self._offsets

    def tokens(self) -> list[Token]:
        return [tok for utt in self.utterances for tok in utt.tokens]

    def token_texts(self) -> list[str]:
        return [tok.text for utt in self.utterances for tok in utt.tokens]

    def utterance_of_token(self, global_index: int) -> int:
        if not 0 <= global_index < self.n_tokens:
            raise IndexError(f"token index {global_index} out of range 0..{self.n_tokens - 1}")
        return bisect_right(self._offsets, global_index) - 1

    def utterance_of_span(self, span: Span) -> int:
        """Utterance holding the span; falls back to the start token for stray spans."""
        return self.utterance_of_token(span.start)

    def span_text(self, start: int, end: int) -> str:
        return " ".join(t.text for t in self.tokens()[start:end])

    def gold_spans(self, kind: str) -> list[Span]:
        return {"target": self.gold_targets, "aspect": self.gold_aspects,
                "opinion": self.gold_opinions}[kind]


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def _require(cond: bool, doc_id: str | None, path: str, message: str) -> None:
    if not cond:
        raise CorpusError(doc_id, path, message)


def _parse_span(entry, doc_id: str, path: str, kind: str, n_tokens: int,
                offsets: Sequence[int]) -> Span:
    _require(isinstance(entry, (list, tuple)) and len(entry) >= 3, doc_id, path,
             "span must be [start, end, text]")
    start, end, text = entry[0], entry[1], entry[2]
    _require(isinstance(start, int) and isinstance(end, int), doc_id, path,
             "span boundaries must be integers")
    _require(isinstance(text, str), doc_id, path, "span text must be a string")
    _require(0 <= start < end <= n_tokens, doc_id, path,
             f"span ({start}, {end}) out of bounds for {n_tokens} tokens")
    first = bisect_right(offsets, start) - 1
    _require(end <= offsets[first + 1], doc_id, path,
             f"span ({start}, {end}) crosses an utterance boundary")
    return Span(start=start, end=end, kind=kind, text=text)


def parse_dialogue(raw: dict) -> Dialogue:
    """Build a :class:`Dialogue` from one raw JSON record.

    Raises :class:`CorpusError` (with the dialogue id and offending field path)
    on schema violations, out-of-bounds or boundary-crossing spans, and reply
    arrays containing forward references or self loops.  Softer inconsistencies
    (duplicate roots, span/text mismatches) parse fine and are surfaced by
    :func:`validate_corpus` instead.
    """
    _require(isinstance(raw, dict), None, "$", "dialogue record must be an object")
    doc_id = raw.get("doc_id")
    _require(isinstance(doc_id, str) and doc_id != "", None, "doc_id",
             "doc_id must be a non-empty string")

    sentences = raw.get("sentences")
    _require(isinstance(sentences, list) and len(sentences) > 0, doc_id, "sentences",
             "sentences must be a non-empty array of token arrays")
    n_utt = len(sentences)

    replies = raw.get("replies")
    _require(isinstance(replies, list) and len(replies) == n_utt, doc_id, "replies",
             f"replies must be an array of {n_utt} integers")
    speakers = raw.get("speakers")
    _require(isinstance(speakers, list) and len(speakers) == n_utt, doc_id, "speakers",
             f"speakers must be an array of {n_utt} integers")

    utterances: list[Utterance] = []
    global_index = 0
    for ui, (sent, reply, speaker) in enumerate(zip(sentences, replies, speakers)):
        _require(isinstance(sent, list) and len(sent) > 0, doc_id, f"sentences[{ui}]",
                 "utterance must be a non-empty token array")
        _require(isinstance(reply, int), doc_id, f"replies[{ui}]", "reply must be an integer")
        _require(reply >= -1, doc_id, f"replies[{ui}]", f"reply {reply} out of range")
        _require(reply < ui, doc_id, f"replies[{ui}]",
                 f"reply cycle/forward reference: utterance {ui} replies to {reply}")
        _require(isinstance(speaker, int) and speaker >= 0, doc_id, f"speakers[{ui}]",
                 "speaker must be a non-negative integer")
        tokens = []
        for ti, text in enumerate(sent):
            _require(isinstance(text, str) and text != "", doc_id,
                     f"sentences[{ui}][{ti}]", "token must be a non-empty string")
            tokens.append(Token(text=text, utterance_index=ui, global_index=global_index))
            global_index += 1
        utterances.append(Utterance(index=ui, speaker=speaker, tokens=tokens, reply_to=reply))

    dialogue = Dialogue(id=doc_id, utterances=utterances)
    n_tokens = dialogue.n_tokens
    offsets = dialogue.utterance_offsets

    for key, kind, sink in (("targets", "target", dialogue.gold_targets),
                            ("aspects", "aspect", dialogue.gold_aspects),
                            ("opinions", "opinion", dialogue.gold_opinions)):
        entries = raw.get(key, [])
        _require(isinstance(entries, list), doc_id, key, f"{key} must be an array")
        for i, entry in enumerate(entries):
            sink.append(_parse_span(entry, doc_id, f"{key}[{i}]", kind, n_tokens, offsets))

    quad_key = "quadruples" if "quadruples" in raw else "triplets"
    entries = raw.get(quad_key, [])
    _require(isinstance(entries, list), doc_id, quad_key, f"{quad_key} must be an array")
    for i, entry in enumerate(entries):
        path = f"{quad_key}[{i}]"
        _require(isinstance(entry, (list, tuple)) and len(entry) >= 7, doc_id, path,
                 "quadruple must be [t_s, t_e, a_s, a_e, o_s, o_e, polarity, ...texts]")
        polarity = entry[6]
        _require(polarity in POLARITIES, doc_id, path,
                 f"polarity must be one of {POLARITIES}, got {polarity!r}")
        texts = list(entry[7:10]) + [""] * (10 - len(entry))
        target = _parse_span([entry[0], entry[1], texts[0]], doc_id, path, "target",
                             n_tokens, offsets)
        aspect = _parse_span([entry[2], entry[3], texts[1]], doc_id, path, "aspect",
                             n_tokens, offsets)
        opinion = _parse_span([entry[4], entry[5], texts[2]], doc_id, path, "opinion",
                              n_tokens, offsets)
        dialogue.gold_quads.append(
            Quadruple(target=target, aspect=aspect, opinion=opinion, polarity=polarity))

    return dialogue


def bundled_corpus_path(name: str) -> Path:
    """Path of a corpus file shipped with the package (see ``diaquad/data``)."""
    return Path(str(files("diaquad").joinpath("data", name)))


def load_corpus(path: str | Path) -> list[Dialogue]:
    """Parse a corpus file into dialogues, failing fast on the first bad record."""
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CorpusError(None, str(path), f"not valid JSON: {exc}") from exc
    _require(isinstance(data, list), None, str(path), "corpus file must be a JSON array")
    return [parse_dialogue(record) for record in data]


# ---------------------------------------------------------------------------
# Canonical serialization
# ---------------------------------------------------------------------------

def dialogue_to_raw(dialogue: Dialogue) -> dict:
    """Rebuild the raw record for a dialogue, in the canonical schema."""
    return {
        "doc_id": dialogue.id,
        "sentences": [[t.text for t in utt.tokens] for utt in dialogue.utterances],
        "replies": [utt.reply_to for utt in dialogue.utterances],
        "speakers": [utt.speaker for utt in dialogue.utterances],
        "targets": [[s.start, s.end, s.text] for s in dialogue.gold_targets],
        "aspects": [[s.start, s.end, s.text] for s in dialogue.gold_aspects],
        "opinions": [[s.start, s.end, s.text] for s in dialogue.gold_opinions],
        "quadruples": [
            [q.target.start, q.target.end, q.aspect.start, q.aspect.end,
             q.opinion.start, q.opinion.end, q.polarity,
             q.target.text, q.aspect.text, q.opinion.text]
            for q in dialogue.gold_quads
        ],
    }


def dumps_corpus(dialogues: Iterable[Dialogue]) -> str:
    """Serialize dialogues with sorted keys and fixed separators (byte-stable)."""
    records = [dialogue_to_raw(d) for d in dialogues]
    return json.dumps(records, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def save_corpus(dialogues: Iterable[Dialogue], path: str | Path) -> None:
    Path(path).write_text(dumps_corpus(dialogues), encoding="utf-8")


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    doc_id: str
    path: str
    message: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def is_clean(self) -> bool:
        return not self.violations

    def add(self, doc_id: str, path: str, message: str) -> None:
        self.violations.append(Violation(doc_id, path, message))

    def by_dialogue(self) -> dict[str, list[Violation]]:
        grouped: dict[str, list[Violation]] = {}
        for v in self.violations:
            grouped.setdefault(v.doc_id, []).append(v)
        return grouped

    def to_text(self) -> str:
        if self.is_clean:
            return "OK: no violations\n"
        lines = [f"{v.doc_id}: {v.path}: {v.message}" for v in self.violations]
        lines.append(f"{len(self.violations)} violation(s)")
        return "\n".join(lines) + "\n"


def _span_text_matches(dialogue: Dialogue, span: Span) -> bool:
    covered = [t.text for t in dialogue.tokens()[span.start:span.end]]
    return span.text in (" ".join(covered), "".join(covered))


def validate_corpus(dialogues: Iterable[Dialogue]) -> ValidationReport:
    """Check corpus invariants; violations are data, not failures."""
    report = ValidationReport()
    for d in dialogues:
        roots = [u.index for u in d.utterances if u.is_root]
        if len(roots) != 1:
            report.add(d.id, "replies",
                       f"reply links must form a single tree, found {len(roots)} roots")
        for ui, utt in enumerate(d.utterances):
            if utt.reply_to >= ui:
                report.add(d.id, f"replies[{ui}]", "reply must point to an earlier utterance")
        for kind in SPAN_KINDS:
            for i, span in enumerate(d.gold_spans(kind)):
                path = f"{kind}s[{i}]"
                if not (0 <= span.start < span.end <= d.n_tokens):
                    report.add(d.id, path, f"span ({span.start}, {span.end}) out of bounds")
                    continue
                if d.utterance_of_token(span.start) != d.utterance_of_token(span.end - 1):
                    report.add(d.id, path, "span crosses an utterance boundary")
                elif span.text and not _span_text_matches(d, span):
                    report.add(d.id, path,
                               f"span text {span.text!r} does not match covered tokens")
        gold_bounds = {kind: {s.bounds for s in d.gold_spans(kind)} for kind in SPAN_KINDS}
        for i, quad in enumerate(d.gold_quads):
            for kind, span in (("target", quad.target), ("aspect", quad.aspect),
                               ("opinion", quad.opinion)):
                if span.bounds not in gold_bounds[kind]:
                    report.add(d.id, f"quadruples[{i}]",
                               f"{kind} span {span.bounds} missing from the {kind} list")
    return report


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

@dataclass
class CorpusStats:
    dialogues: int = 0
    utterances: int = 0
    speakers: int = 0
    targets: int = 0
    aspects: int = 0
    opinions: int = 0
    pairs_ta: int = 0
    pairs_to: int = 0
    pairs_ao: int = 0
    quads: int = 0
    intra: int = 0
    cross: int = 0

    _FIELDS = ("dialogues", "utterances", "speakers", "targets", "aspects", "opinions",
               "pairs_ta", "pairs_to", "pairs_ao", "quads", "intra", "cross")
    _HEAD = ("Dia.", "Utt.", "Spk.", "Tgt.", "Asp.", "Opi.",
             "Pair_ta", "Pair_to", "Pair_ao", "Quad.", "Intra.", "Cross.")

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self._FIELDS}

    def to_text(self) -> str:
        """One header line plus one value row; pair counts are projected from quads."""
        values = [str(getattr(self, name)) for name in self._FIELDS]
        widths = [max(len(h), len(v)) for h, v in zip(self._HEAD, values)]
        head = "  ".join(h.rjust(w) for h, w in zip(self._HEAD, widths))
        row = "  ".join(v.rjust(w) for v, w in zip(values, widths))
        return head + "\n" + row + "\n"


def is_cross_utterance(dialogue: Dialogue, quad: Quadruple) -> bool:
    """True when any two quad elements live in different utterances."""
    utts = {dialogue.utterance_of_span(quad.target),
            dialogue.utterance_of_span(quad.aspect),
            dialogue.utterance_of_span(quad.opinion)}
    return len(utts) > 1


def corpus_stats(dialogues: Iterable[Dialogue]) -> CorpusStats:
    """Corpus-level counts: raw span list sizes, per-dialogue deduplicated
    quad-projected pairs, and the intra/cross quadruple split."""
    stats = CorpusStats()
    for d in dialogues:
        stats.dialogues += 1
        stats.utterances += d.n_utterances
        stats.speakers += len({u.speaker for u in d.utterances})
        stats.targets += len(d.gold_targets)
        stats.aspects += len(d.gold_aspects)
        stats.opinions += len(d.gold_opinions)
        ta = {(q.target.bounds, q.aspect.bounds) for q in d.gold_quads}
        to = {(q.target.bounds, q.opinion.bounds) for q in d.gold_quads}
        ao = {(q.aspect.bounds, q.opinion.bounds) for q in d.gold_quads}
        stats.pairs_ta += len(ta)
        stats.pairs_to += len(to)
        stats.pairs_ao += len(ao)
        stats.quads += len(d.gold_quads)
        for q in d.gold_quads:
            if is_cross_utterance(d, q):
                stats.cross += 1
            else:
                stats.intra += 1
    return stats


# ---------------------------------------------------------------------------
# Vocabulary
# ---------------------------------------------------------------------------

class Vocabulary:
    """Token-to-id map with reserved padding and unknown entries.

    Ids are dense from 0; ordering is by descending frequency then
    lexicographic, so the same corpus always yields the same bytes on save.
    """

    def __init__(self, tokens: Sequence[str]):
        self._tokens = [PAD_TOKEN, UNK_TOKEN, *tokens]
        self._ids = {tok: i for i, tok in enumerate(self._tokens)}
        if len(self._ids) != len(self._tokens):
            raise ValueError("vocabulary tokens must be unique")

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self._tokens == other._tokens

    @property
    def tokens(self) -> list[str]:
        return list(self._tokens)

    def id_of(self, token: str) -> int:
        return self._ids.get(token, UNK_ID)

    def encode(self, texts: Iterable[str]) -> list[int]:
        return [self._ids.get(t, UNK_ID) for t in texts]

    def to_json(self) -> str:
        return json.dumps(self._tokens[2:], ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "Vocabulary":
        return cls(json.loads(text))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def build_vocabulary(dialogues: Sequence[Dialogue]) -> Vocabulary:
    """Vocabulary from the training split only; deterministic ordering."""
    if not dialogues:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    counts: Counter[str] = Counter()
    for d in dialogues:
        counts.update(d.token_texts())
    ordered = sorted(counts, key=lambda tok: (-counts[tok], tok))
    return Vocabulary(ordered)
