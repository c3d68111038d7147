"""Exact-match scoring: span / pair / quad F1 and the cross-utterance breakdown.

Run:  python demos/06_evaluation.py
"""

from diaquad.corpus import bundled_corpus_path, load_corpus
from diaquad.metrics import evaluate, quad_f1

print("=== the matching rules on a tiny example ===")
gold = [[(0, 1, 2, 3, 4, 5, "pos"), (6, 7, 8, 9, 10, 11, "neg"),
         (0, 1, 8, 9, 4, 5, "pos")]]
pred = [[(0, 1, 2, 3, 4, 5, "pos"), (6, 7, 8, 9, 10, 11, "neg"),
         (0, 1, 2, 3, 10, 11, "neg"), (6, 7, 2, 3, 4, 5, "other")]]
micro, iden = quad_f1(gold, pred)
print(f"3 gold quads, 4 predictions, 2 exact matches")
print(f"micro:          P {micro.precision:.3f}  R {micro.recall:.3f}  "
      f"F1 {micro.f1:.3f}   (= 4/7)")
print(f"identification: P {iden.precision:.3f}  R {iden.recall:.3f}  "
      f"F1 {iden.f1:.3f}   (polarity ignored)")

print("\n=== full report against a corpus ===")
corpus = load_corpus(bundled_corpus_path("sample5.json"))
gold_as_pred = {d.id: [(q.target.start, q.target.end, q.aspect.start, q.aspect.end,
                        q.opinion.start, q.opinion.end, q.polarity)
                       for q in d.gold_quads] for d in corpus}
# drop one dialogue's predictions and flip one polarity to make it interesting
gold_as_pred["s5"] = []
flipped = list(gold_as_pred["s2"][0])
flipped[6] = "pos"
gold_as_pred["s2"] = [tuple(flipped), *gold_as_pred["s2"][1:]]

report = evaluate(corpus, gold_as_pred)
print(report.to_text())
print("the per-level rows bucket each quad by the largest utterance distance "
      "between its elements; pass distance='tree' to measure along the reply "
      "tree instead")
