"""Synthetic dialogue generation for demos, property tests, and training recipes.

Generated dialogues are structurally valid by construction: reply arrays form
trees, spans sit inside single utterances with matching texts, and every quad
element is registered in its gold span list.  Span placement keeps all span
token ranges disjoint, so encoded grids are conflict-free unless a test asks
for overlap on purpose.
"""

from __future__ import annotations

import numpy as np

from .corpus import Dialogue, Quadruple, Span, Utterance, Token, POLARITIES

_WORDS = ("the", "a", "my", "this", "that", "is", "was", "feels", "looks", "runs",
          "and", "but", "so", "too", "very", "not", "also", "still", "really",
          "today", "yesterday", "again", "here", "now", "though", ",", ".", "!")
_NOUNS = ("phone", "battery", "screen", "camera", "speaker", "charger", "case",
          "display", "sensor", "button", "system", "update", "price", "design")
_BRANDS = ("alpha", "nova", "pixelmax", "zeta", "orbit", "lumen", "vertex", "mira")
_FEELS = ("great", "bad", "fine", "awful", "sharp", "slow", "quick", "loud",
          "dim", "smooth", "rough", "weak", "strong", "odd")


def random_tree(rng: np.random.Generator, n_utterances: int) -> list[int]:
    """Reply array of a random tree: node i replies to a random earlier node."""
    return [-1] + [int(rng.integers(0, i)) for i in range(1, n_utterances)]


def random_dialogue(rng: np.random.Generator, doc_id: str = "synthetic",
                    n_utterances: int | None = None,
                    min_tokens: int = 4, max_tokens: int = 10,
                    n_quads: int | None = None,
                    n_speakers: int | None = None,
                    polarities: tuple[str, ...] = POLARITIES) -> Dialogue:
    """A random reply tree with disjoint-span quadruples."""
    if n_utterances is None:
        n_utterances = int(rng.integers(2, 7))
    if n_speakers is None:
        n_speakers = int(rng.integers(1, max(2, n_utterances) + 1))
    replies = random_tree(rng, n_utterances)
    speakers = [int(rng.integers(0, n_speakers)) for _ in range(n_utterances)]

    utterances = []
    global_index = 0
    pool = _WORDS + _NOUNS + _BRANDS + _FEELS
    for ui in range(n_utterances):
        length = int(rng.integers(min_tokens, max_tokens + 1))
        tokens = []
        for _ in range(length):
            tokens.append(Token(text=str(rng.choice(pool)), utterance_index=ui,
                                global_index=global_index))
            global_index += 1
        utterances.append(Utterance(index=ui, speaker=speakers[ui],
                                    tokens=tokens, reply_to=replies[ui]))
    dialogue = Dialogue(id=doc_id, utterances=utterances)

    if n_quads is None:
        n_quads = int(rng.integers(0, 4))
    _attach_random_quads(rng, dialogue, n_quads, polarities)
    return dialogue


def _attach_random_quads(rng: np.random.Generator, dialogue: Dialogue,
                         n_quads: int, polarities: tuple[str, ...]) -> None:
    """Carve disjoint spans out of the token sequence and bundle them in threes."""
    free: list[tuple[int, int]] = []  # candidate (start, end) blocks per utterance
    for utt in dialogue.utterances:
        lo = utt.tokens[0].global_index
        free.append((lo, lo + len(utt)))
    spans: list[tuple[int, int]] = []

    def carve() -> tuple[int, int] | None:
        order = rng.permutation(len(free))
        for bi in order:
            lo, hi = free[bi]
            width = int(rng.integers(1, 3))
            if hi - lo < width:
                continue
            start = int(rng.integers(lo, hi - width + 1))
            end = start + width
            free[bi] = (lo, start)
            if hi - end > 0:
                free.append((end, hi))
            return (start, end)
        return None

    for qi in range(n_quads):
        picked = [carve() for _ in range(3)]
        if any(p is None for p in picked):
            break
        quad_spans = []
        for (start, end), kind in zip(picked, ("target", "aspect", "opinion")):
            text = dialogue.span_text(start, end)
            quad_spans.append(Span(start=start, end=end, kind=kind, text=text))
        target, aspect, opinion = quad_spans
        dialogue.gold_targets.append(target)
        dialogue.gold_aspects.append(aspect)
        dialogue.gold_opinions.append(opinion)
        dialogue.gold_quads.append(Quadruple(
            target=target, aspect=aspect, opinion=opinion,
            polarity=str(rng.choice(polarities))))


def random_corpus(rng: np.random.Generator, n_dialogues: int,
                  prefix: str = "syn", **kwargs) -> list[Dialogue]:
    return [random_dialogue(rng, doc_id=f"{prefix}{i:04d}", **kwargs)
            for i in range(n_dialogues)]


def make_overfit_corpus(n_dialogues: int = 8) -> list[Dialogue]:
    """Small deterministic training corpus for memorization checks.

    Each dialogue praises or pans one brand across a three-utterance thread,
    with one cross-utterance quad, so a desk-scale model can reach near-perfect
    training F1 in a few hundred epochs.
    """
    dialogues = []
    for i in range(n_dialogues):
        brand = _BRANDS[i % len(_BRANDS)]
        noun_a, noun_b = _NOUNS[(2 * i) % len(_NOUNS)], _NOUNS[(2 * i + 1) % len(_NOUNS)]
        feel_a, feel_b = _FEELS[i % len(_FEELS)], _FEELS[(i + 5) % len(_FEELS)]
        pol_a = POLARITIES[i % 3]
        pol_b = POLARITIES[(i + 1) % 3]
        sents = [
            ["the", brand, noun_a, "is", feel_a, "."],
            ["its", noun_b, "runs", feel_b, "too", "."],
            ["i", "agree", "about", "the", brand, "."],
        ]
        utterances = []
        g = 0
        for ui, words in enumerate(sents):
            tokens = [Token(text=w, utterance_index=ui, global_index=g + k)
                      for k, w in enumerate(words)]
            g += len(words)
            utterances.append(Utterance(index=ui, speaker=ui % 2, tokens=tokens,
                                        reply_to=ui - 1))
        d = Dialogue(id=f"overfit{i}", utterances=utterances)
        t1 = Span(1, 2, "target", brand)
        a1 = Span(2, 3, "aspect", noun_a)
        o1 = Span(4, 5, "opinion", feel_a)
        a2 = Span(7, 8, "aspect", noun_b)
        o2 = Span(9, 10, "opinion", feel_b)
        d.gold_targets += [t1]
        d.gold_aspects += [a1, a2]
        d.gold_opinions += [o1, o2]
        d.gold_quads += [
            Quadruple(t1, a1, o1, pol_a),
            Quadruple(t1, a2, o2, pol_b),  # cross-utterance: target upstream
        ]
        dialogues.append(d)
    return dialogues
