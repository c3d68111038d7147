"""Command-line surface: validate, stats, roundtrip, train, predict, eval.

Exit codes: 0 on success, 1 for domain failures (validation violations,
evaluation mismatches, diverged training), 2 for I/O and configuration
errors.  A flat JSON config file can preset any model or training field;
command-line flags override file values, and the effective configuration is
echoed next to every produced artifact.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import corpus as corpus_mod
from .codec import DecodeConfig, FidelityReport, roundtrip_report
from .corpus import CorpusError, ValidationReport, corpus_stats, load_corpus, parse_dialogue
from .embeddings import EmbeddingFileError, load_embeddings, verify_embeddings
from .metrics import EvalError, evaluate, predictions_by_id
from .scorer import (EMBEDDING_EXTERNAL, ModelConfig, ScorerError, load_checkpoint)
from .train import (TrainConfig, TrainingDiverged, load_predictions,
                    predict_dialogue, save_predictions, train_loop)


class ConfigError(ValueError):
    pass


_MODEL_KEYS = {f.name for f in dataclasses.fields(ModelConfig)}
_TRAIN_KEYS = {f.name for f in dataclasses.fields(TrainConfig)}


def build_run_config(config_path: str | None,
                     overrides: dict) -> tuple[ModelConfig, TrainConfig]:
    """Defaults <- config file <- explicit flags; unknown keys are rejected."""
    merged: dict = {}
    if config_path is not None:
        try:
            loaded = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{config_path}: not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError(f"{config_path}: config must be a flat JSON object")
        merged.update(loaded)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    unknown = set(merged) - _MODEL_KEYS - _TRAIN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    try:
        model_cfg = ModelConfig(**{k: v for k, v in merged.items() if k in _MODEL_KEYS})
        train_cfg = TrainConfig.from_dict(
            {k: v for k, v in merged.items() if k in _TRAIN_KEYS})
    except (ScorerError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    return model_cfg, train_cfg


def _effective_config(model_cfg: ModelConfig, train_cfg: TrainConfig,
                      extra: dict) -> dict:
    return {**model_cfg.to_dict(), **train_cfg.to_dict(), **extra}


def _write_or_print(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _parallel_map(fn, items, threads: int) -> list:
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_validate(args) -> int:
    try:
        data = json.loads(Path(args.corpus).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        print(f"error: {args.corpus}: not valid JSON: {exc}", file=sys.stderr)
        return 2
    if not isinstance(data, list):
        print(f"error: {args.corpus}: corpus file must be a JSON array", file=sys.stderr)
        return 2

    report = ValidationReport()
    dialogues = []
    for i, record in enumerate(data):
        try:
            dialogues.append(parse_dialogue(record))
        except CorpusError as exc:
            doc = exc.doc_id or f"record[{i}]"
            report.add(doc, exc.path, exc.message)
    per_dialogue = _parallel_map(
        lambda d: corpus_mod.validate_corpus([d]).violations, dialogues, args.threads)
    for violations in per_dialogue:
        report.violations.extend(violations)
    _write_or_print(report.to_text(), args.out)
    return 0 if report.is_clean else 1


def cmd_stats(args) -> int:
    stats = corpus_stats(load_corpus(args.corpus))
    if args.json:
        _write_or_print(json.dumps(stats.to_dict(), indent=1) + "\n", args.out)
    else:
        _write_or_print(stats.to_text(), args.out)
    return 0


def cmd_roundtrip(args) -> int:
    dialogues = load_corpus(args.corpus)
    cfg = DecodeConfig(pair_mode=args.pair_mode)
    report = FidelityReport()
    for partial in _parallel_map(lambda d: roundtrip_report([d], cfg),
                                 dialogues, args.threads):
        report.entries.extend(partial.entries)
    if args.json:
        payload = report.to_dict()
        payload["config"] = {"pair_mode": args.pair_mode, "corpus": args.corpus}
        _write_or_print(json.dumps(payload, indent=1) + "\n", args.out)
    else:
        _write_or_print(report.to_text(), args.out)
    return 0


def cmd_train(args) -> int:
    overrides = {key: getattr(args, key) for key in
                 ("d_model", "n_heads", "base_layers", "tag_dim", "dropout",
                  "embedding_source", "learning_rate", "batch_size", "epochs",
                  "seed", "pair_mode")}
    model_cfg, train_cfg = build_run_config(args.config, overrides)

    store = None
    if args.embeddings is not None:
        store = load_embeddings(args.embeddings)
    if model_cfg.embedding_source == EMBEDDING_EXTERNAL:
        if store is None:
            raise ConfigError("embedding_source is external-frozen but no "
                              "--embeddings file was given")
        if store.dim != model_cfg.d_model:
            raise ConfigError(f"embedding dimension {store.dim} != d_model "
                              f"{model_cfg.d_model}")

    train_set = load_corpus(args.train)
    dev_set = load_corpus(args.dev)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    echo = _effective_config(model_cfg, train_cfg,
                             {"train": args.train, "dev": args.dev,
                              "embeddings": args.embeddings})
    (out / "config.json").write_text(json.dumps(echo, indent=1, sort_keys=True),
                                     encoding="utf-8")
    result = train_loop(train_set, dev_set, model_cfg, train_cfg,
                        out_dir=out, embedding_store=store,
                        state_path=(out / "state.npz") if args.state else None,
                        resume_from=args.resume,
                        log_fn=lambda line: print(line))
    print(f"best dev micro F1 {result.best_dev_f1:.4f} at epoch {result.best_epoch}")
    print(f"checkpoint: {out / 'model.dqsk'}")
    return 0


def cmd_predict(args) -> int:
    params = load_checkpoint(args.checkpoint)
    dialogues = load_corpus(args.corpus)
    store = load_embeddings(args.embeddings) if args.embeddings else None
    if params.config.embedding_source == EMBEDDING_EXTERNAL:
        if store is None:
            raise ConfigError("checkpoint wants external embeddings; pass --embeddings")
        problems = verify_embeddings(dialogues, store, params.config.d_model)
        problems = [p for p in problems if "not in corpus" not in p]
        if problems:
            raise ConfigError("embedding file does not match corpus: "
                              + "; ".join(problems))
    decode_cfg = DecodeConfig(pair_mode=args.pair_mode)

    def run(dialogue):
        quads = predict_dialogue(dialogue, params, decode_cfg, store)
        return {"doc_id": dialogue.id,
                "quadruples": [[q.target.start, q.target.end, q.aspect.start,
                                q.aspect.end, q.opinion.start, q.opinion.end,
                                q.polarity] for q in quads]}

    records = _parallel_map(run, dialogues, args.threads)
    save_predictions(records, args.out)
    echo = {"checkpoint": args.checkpoint, "corpus": args.corpus,
            "pair_mode": args.pair_mode, "embeddings": args.embeddings,
            **params.config.to_dict()}
    Path(str(args.out) + ".config.json").write_text(
        json.dumps(echo, indent=1, sort_keys=True), encoding="utf-8")
    print(f"wrote {len(records)} prediction records to {args.out}")
    return 0


def cmd_eval(args) -> int:
    gold = load_corpus(args.gold)
    predictions = predictions_by_id(load_predictions(args.pred))
    report = evaluate(gold, predictions, distance=args.distance)
    report.config = {"gold": args.gold, "pred": args.pred, "distance": args.distance}
    if args.out is not None:
        Path(args.out).write_text(report.to_json() + "\n", encoding="utf-8")
    sys.stdout.write(report.to_text())
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diaquad",
        description="Sentiment quadruple extraction from threaded dialogues")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check corpus invariants")
    p.add_argument("corpus")
    p.add_argument("--out", default=None)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("stats", help="corpus statistics table")
    p.add_argument("corpus")
    p.add_argument("--json", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("roundtrip", help="grid encode/decode fidelity report")
    p.add_argument("corpus")
    p.add_argument("--pair-mode", dest="pair_mode", choices=("strict", "relaxed"),
                   default="strict")
    p.add_argument("--json", action="store_true")
    p.add_argument("--out", default=None)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(fn=cmd_roundtrip)

    p = sub.add_parser("train", help="train a grid scorer")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--embeddings", default=None)
    p.add_argument("--state", action="store_true",
                   help="snapshot resumable training state each epoch")
    p.add_argument("--resume", default=None, help="resume from a state snapshot")
    p.add_argument("--d-model", dest="d_model", type=int, default=None)
    p.add_argument("--n-heads", dest="n_heads", type=int, default=None)
    p.add_argument("--base-layers", dest="base_layers", type=int, default=None)
    p.add_argument("--tag-dim", dest="tag_dim", type=int, default=None)
    p.add_argument("--dropout", type=float, default=None)
    p.add_argument("--embedding-source", dest="embedding_source", default=None,
                   choices=("trainable", "external-frozen"))
    p.add_argument("--learning-rate", dest="learning_rate", type=float, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--pair-mode", dest="pair_mode", choices=("strict", "relaxed"),
                   default=None)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("predict", help="decode quadruples with a trained model")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--embeddings", default=None)
    p.add_argument("--pair-mode", dest="pair_mode", choices=("strict", "relaxed"),
                   default="strict")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("eval", help="score predictions against a gold corpus")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--distance", choices=("index", "tree"), default="index")
    p.set_defaults(fn=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (EvalError, TrainingDiverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, CorpusError, ScorerError, EmbeddingFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
