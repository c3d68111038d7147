"""Beyond memorization: learn patterns that transfer to unseen dialogues.

Builds a corpus of templated three-utterance threads where the opinion word
determines polarity (e.g. "sharp" is always positive), trains on 64 of them,
and evaluates on 16 held-out brand/aspect/opinion combinations the model has
never seen together.  Takes about half a minute.

Run:  python demos/07_generalization.py
"""

import numpy as np

from diaquad.corpus import Dialogue, Quadruple, Span, Token, Utterance
from diaquad.scorer import ModelConfig
from diaquad.train import TrainConfig, train_loop

BRANDS = ["alpha", "nova", "pixelmax", "zeta", "orbit", "lumen", "vertex", "mira",
          "quark", "helio"]
NOUNS = ["battery", "screen", "camera", "speaker", "charger", "display", "button",
         "price", "design", "system"]
FEELS = {"great": "pos", "sharp": "pos", "smooth": "pos", "strong": "pos",
         "awful": "neg", "slow": "neg", "weak": "neg", "rough": "neg",
         "fine": "other", "odd": "other"}


def build(doc_id, brand, noun_a, feel_a, noun_b, feel_b):
    sents = [["the", brand, noun_a, "is", feel_a, "."],
             ["its", noun_b, "runs", feel_b, "too", "."],
             ["i", "agree", "about", "the", brand, "."]]
    utts, g = [], 0
    for ui, ws in enumerate(sents):
        toks = [Token(w, ui, g + k) for k, w in enumerate(ws)]
        g += len(ws)
        utts.append(Utterance(ui, ui % 2, toks, ui - 1))
    d = Dialogue(id=doc_id, utterances=utts)
    t = Span(1, 2, "target", brand)
    a1, o1 = Span(2, 3, "aspect", noun_a), Span(4, 5, "opinion", feel_a)
    a2, o2 = Span(7, 8, "aspect", noun_b), Span(9, 10, "opinion", feel_b)
    d.gold_targets += [t]
    d.gold_aspects += [a1, a2]
    d.gold_opinions += [o1, o2]
    d.gold_quads += [Quadruple(t, a1, o1, FEELS[feel_a]),
                     Quadruple(t, a2, o2, FEELS[feel_b])]   # cross-utterance
    return d


rng = np.random.default_rng(42)
feels = list(FEELS)
combos = [(b, NOUNS[rng.integers(10)], feels[rng.integers(10)],
           NOUNS[rng.integers(10)], feels[rng.integers(10)])
          for b in BRANDS for _ in range(8)]
rng.shuffle(combos)
train = [build(f"tr{i}", *c) for i, c in enumerate(combos[:64])]
dev = [build(f"dv{i}", *c) for i, c in enumerate(combos[64:80])]
print(f"training on {len(train)} dialogues, evaluating on {len(dev)} held-out "
      f"combinations")

result = train_loop(train, dev, ModelConfig(), TrainConfig(epochs=36, seed=1))
for entry in result.history[::6] + result.history[-1:]:
    print(f"epoch {entry['epoch']:>2}  loss {entry['train_loss']:.4f}  "
          f"dev micro F1 {entry['dev_micro_f1']:.3f}  "
          f"iden F1 {entry['dev_iden_f1']:.3f}")
print(f"\nbest dev micro F1 {result.best_dev_f1:.3f} at epoch {result.best_epoch}: "
      "the scorer pairs targets with aspects and opinions it never saw together, "
      "and reads polarity off the opinion lexicon")
