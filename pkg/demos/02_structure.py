"""Dialogue-tree structure: threads, the three interaction masks, and the
signed relative distances that feed the rotary scorer.

Run:  python demos/02_structure.py
"""

import numpy as np

from diaquad.corpus import bundled_corpus_path, load_corpus, parse_dialogue
from diaquad.structure import (RotaryMap, assign_threads, build_masks, delta_matrix,
                               local_positions, rotate)

thread = load_corpus(bundled_corpus_path("phone_thread.json"))[0]

print("=== thread assignment ===")
threads = assign_threads(thread)
print("replies:", [u.reply_to for u in thread.utterances])
print("threads:", threads.thread_of, f"({threads.n_threads} threads, root utterance "
      f"{threads.root} is thread 0)")

print("\n=== masks on a small dialogue ===")
toy = parse_dialogue({
    "doc_id": "toy",
    "sentences": [["root", "!"], ["left", "reply"], ["deep", "one"], ["right"]],
    "replies": [-1, 0, 1, 0],
    "speakers": [0, 1, 0, 1],
})
masks = build_masks(toy)
names = [f"{t.text}" for t in toy.tokens()]
for label, mask in (("thread", masks.th), ("speaker", masks.sp), ("reply", masks.rp)):
    print(f"\n{label} mask (1 = may attend):")
    print("        " + " ".join(f"{n:>5}" for n in names))
    for name, row in zip(names, mask.astype(int)):
        print(f"  {name:>5} " + " ".join(f"{v:>5}" for v in row))

print("\n=== local positions and signed distances ===")
print("local positions (root-path token offsets):", local_positions(toy).tolist())
print("delta matrix (cross-thread distances run through the root):")
print(delta_matrix(toy))

print("\n=== rotary rotations make dot products relative ===")
rmap = RotaryMap(dim=8)
rng = np.random.default_rng(0)
v, w = rng.normal(size=(2, 8))
for shift in (0, 13, -40):
    score = rotate(v, 5 + shift, rmap) @ rotate(w, 9 + shift, rmap)
    print(f"positions (5, 9) shifted by {shift:>4}: score {score:+.10f}")
print("the score never moves: only the distance 9 - 5 = 4 matters")
