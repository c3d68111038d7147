"""Walk through the corpus layer: loading, validation, statistics, vocabulary.

Run:  python demos/01_corpus.py
"""

from diaquad.corpus import (build_vocabulary, bundled_corpus_path, corpus_stats,
                            load_corpus, validate_corpus)

print("=== loading the bundled corpora ===")
thread = load_corpus(bundled_corpus_path("phone_thread.json"))[0]
sample5 = load_corpus(bundled_corpus_path("sample5.json"))

print(f"dialogue {thread.id}: {thread.n_utterances} utterances, "
      f"{thread.n_tokens} tokens, {len(thread.gold_quads)} quadruples")
for utt in thread.utterances[:3]:
    text = " ".join(t.text for t in utt.tokens)
    print(f"  [{utt.index}] speaker {utt.speaker} replying to {utt.reply_to}: "
          f"{text[:64]}...")

print("\n=== one gold quadruple, spans in global token indices ===")
quad = thread.gold_quads[0]
print(f"  target  {quad.target.bounds} {quad.target.text!r}")
print(f"  aspect  {quad.aspect.bounds} {quad.aspect.text!r}")
print(f"  opinion {quad.opinion.bounds} {quad.opinion.text!r}")
print(f"  polarity {quad.polarity}")

print("\n=== validation ===")
report = validate_corpus([thread, *sample5])
print("clean" if report.is_clean else report.to_text())

print("\n=== statistics (pair columns are projected from quads) ===")
print(corpus_stats(sample5).to_text())

print("=== vocabulary from the training split ===")
vocab = build_vocabulary(sample5)
print(f"{len(vocab)} entries; ids are frequency-then-lexicographic")
print("the ->", vocab.id_of("the"), "| unseen ->", vocab.id_of("zzz-unseen"))
