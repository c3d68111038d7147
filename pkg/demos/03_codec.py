"""Grid tagging: how quadruples become three label matrices and come back.

Run:  python demos/03_codec.py
"""

from diaquad.codec import DecodeConfig, decode, encode, roundtrip_report
from diaquad.corpus import bundled_corpus_path, load_corpus, parse_dialogue

thread = load_corpus(bundled_corpus_path("phone_thread.json"))[0]

print("=== encoding ===")
grid = encode(thread)
sparse = grid.to_sparse()
print(f"grid size {grid.n} x {grid.n}; non-empty cells: "
      f"ent {len(sparse['ent'])}, pair {len(sparse['pair'])}, pol {len(sparse['pol'])}; "
      f"conflicts {grid.conflicts}")
print("entity cells sit at (start, end - 1):", sparse["ent"][:4], "...")
print("pair cells link heads and tails:", sparse["pair"][:4], "...")

print("\n=== decoding recovers the gold set exactly ===")
decoded = decode(grid, DecodeConfig(pair_mode="strict"), thread)
print(f"decoded {len(decoded)} of {len(thread.gold_quads)} quadruples")
for quad in decoded[:3]:
    print(f"  ({quad.target.text} | {quad.aspect.text} | {quad.opinion.text}) "
          f"-> {quad.polarity}")

print("\n=== strict vs relaxed linking ===")
shared = parse_dialogue({
    "doc_id": "shared-target",
    "sentences": [["orbit", "screen", "is", "dim", "but", "sound", "is", "loud"]],
    "replies": [-1], "speakers": [0],
    "targets": [[0, 1, "orbit"]],
    "aspects": [[1, 2, "screen"], [5, 6, "sound"]],
    "opinions": [[3, 4, "dim"], [7, 8, "loud"]],
    "quadruples": [[0, 1, 1, 2, 3, 4, "neg", "orbit", "screen", "dim"],
                   [0, 1, 5, 6, 7, 8, "pos", "orbit", "sound", "loud"]],
})
grid2 = encode(shared)
strict = decode(grid2, DecodeConfig(pair_mode="strict"), shared)
relaxed = decode(grid2, DecodeConfig(pair_mode="relaxed"), shared)
print(f"strict keeps the two annotated quads: {len(strict)}")
print(f"relaxed also accepts cross combinations of a shared target: {len(relaxed)}")

print("\n=== corpus-level fidelity ===")
sample5 = load_corpus(bundled_corpus_path("sample5.json"))
print(roundtrip_report([thread, *sample5]).to_text())
