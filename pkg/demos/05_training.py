"""Train end to end on a small synthetic corpus and evaluate the result.

Run:  python demos/05_training.py

The same flow at full scale (with a real corpus directory) via the CLI:

    diaquad train --train data/zh_train.json --dev data/zh_valid.json \
        --out runs/zh-seed1 --seed 1
    diaquad predict --checkpoint runs/zh-seed1/model.dqsk \
        --corpus data/zh_test.json --out runs/zh-seed1/pred.json
    diaquad eval --gold data/zh_test.json --pred runs/zh-seed1/pred.json

Averaging over five seeds is a loop over ``--seed 1..5`` followed by
averaging the reported micro F1 values.
"""

from diaquad import synth
from diaquad.metrics import evaluate, predictions_by_id
from diaquad.scorer import ModelConfig
from diaquad.train import TrainConfig, predict, train_loop

corpus = synth.make_overfit_corpus(8)
print(f"=== memorization run: {len(corpus)} dialogues, "
      f"{sum(d.n_tokens for d in corpus)} tokens ===")

progress = []
result = train_loop(
    corpus, corpus,
    ModelConfig(),                      # trainable embeddings, defaults
    TrainConfig(epochs=150, seed=7),
    log_fn=progress.append,
)
for line in progress[::25] + progress[-1:]:
    print(line)
print(f"\nbest train micro F1 {result.best_dev_f1:.3f} at epoch {result.best_epoch}")

print("\n=== predictions from the best checkpoint ===")
records = predict(corpus, result.best_params)
report = evaluate(corpus, predictions_by_id(records))
print(report.to_text())
