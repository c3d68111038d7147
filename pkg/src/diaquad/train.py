"""Weighted multi-task loss, AdamW training loop, model selection, checkpoints.

The loss is label-weighted cross entropy per grid cell, normalized by each
dialogue's squared token count, with the pair and polarity subtasks mixed in
at configurable weights.  Training state (parameters, optimizer moments, RNG)
serializes losslessly so a resumed run continues bit-identically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor, backward
from .codec import DecodeConfig, LabelGrid, decode, encode
from .corpus import Dialogue, Quadruple, Vocabulary, build_vocabulary
from .scorer import (EMBEDDING_TRAINABLE, ModelConfig, PreparedDialogue, ScoreGrids,
                     ScorerParams, forward_tensors, prepare_dialogue, save_checkpoint)


class TrainingDiverged(RuntimeError):
    """Raised when a batch produces a non-finite loss."""


@dataclass
class TrainConfig:
    alpha_ent: tuple[float, ...] = (1.0, 5.0, 5.0, 5.0)
    alpha_pair: tuple[float, ...] = (1.0, 5.0, 5.0)
    alpha_pol: tuple[float, ...] = (1.0, 5.0, 5.0, 5.0)
    beta: float = 0.5
    eta: float = 0.5
    learning_rate: float = 1e-3
    encoder_learning_rate: float | None = None
    batch_size: int = 4
    epochs: int = 20
    max_grad_norm: float = 1.0
    weight_decay: float = 0.01
    seed: int = 1
    pair_mode: str = "strict"

    def __post_init__(self) -> None:
        if self.learning_rate < 0 or (self.encoder_learning_rate or 0) < 0:
            raise ValueError("learning rates must be non-negative")
        if min(min(self.alpha_ent), min(self.alpha_pair), min(self.alpha_pol)) < 0:
            raise ValueError("label weights must be non-negative")
        if self.batch_size <= 0 or self.epochs < 0:
            raise ValueError("batch_size must be positive and epochs non-negative")

    @property
    def lr_of(self) -> dict[str, float]:
        enc = self.encoder_learning_rate
        return {"head": self.learning_rate,
                "encoder": self.learning_rate if enc is None else enc}

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "beta", "eta", "learning_rate", "encoder_learning_rate", "batch_size",
            "epochs", "max_grad_norm", "weight_decay", "seed", "pair_mode")}
        out["alpha_ent"] = list(self.alpha_ent)
        out["alpha_pair"] = list(self.alpha_pair)
        out["alpha_pol"] = list(self.alpha_pol)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        data = dict(data)
        for key in ("alpha_ent", "alpha_pair", "alpha_pol"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LossBreakdown:
    total: float
    ent: float
    pair: float
    pol: float


def _loss_tensor(logits: tuple[Tensor, Tensor, Tensor], gold: LabelGrid,
                 cfg: TrainConfig) -> tuple[Tensor, LossBreakdown]:
    n2 = float(gold.n * gold.n)
    l_ent = ag.weighted_nll(logits[0], gold.ent, cfg.alpha_ent, n2)
    l_pair = ag.weighted_nll(logits[1], gold.pair, cfg.alpha_pair, n2)
    l_pol = ag.weighted_nll(logits[2], gold.pol, cfg.alpha_pol, n2)
    total = ag.add(l_ent, ag.add(ag.scale(l_pair, cfg.beta), ag.scale(l_pol, cfg.eta)))
    return total, LossBreakdown(total=total.item(), ent=l_ent.item(),
                                pair=l_pair.item(), pol=l_pol.item())


def loss(grids: ScoreGrids, gold: LabelGrid, cfg: TrainConfig = TrainConfig()) -> LossBreakdown:
    """Per-dialogue loss of scored grids against a gold grid."""
    if grids.n != gold.n:
        raise ValueError(f"grid sizes differ: scored {grids.n}, gold {gold.n}")
    logits = (Tensor(grids.ent), Tensor(grids.pair), Tensor(grids.pol))
    _, breakdown = _loss_tensor(logits, gold, cfg)
    return breakdown


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

class AdamW:
    """Adam with decoupled weight decay and per-group learning rates."""

    def __init__(self, params: ScorerParams, cfg: TrainConfig,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.cfg = cfg
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.m = {k: np.zeros_like(t.data) for k, t in params.tensors.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in params.tensors.items()}

    def clip_gradients(self) -> float:
        total = 0.0
        for t in self.params.tensors.values():
            if t.grad is not None:
                total += float((t.grad * t.grad).sum())
        norm = float(np.sqrt(total))
        limit = self.cfg.max_grad_norm
        if limit > 0 and norm > limit:
            factor = limit / norm
            for t in self.params.tensors.values():
                if t.grad is not None:
                    t.grad = t.grad * factor
        return norm

    def step(self) -> None:
        self.step_count += 1
        b1c = 1.0 - self.beta1 ** self.step_count
        b2c = 1.0 - self.beta2 ** self.step_count
        for name, tensor in self.params.tensors.items():
            g = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
            m = self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            v = self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            lr = self.cfg.lr_of[self.params.group_of(name)]
            update = (m / b1c) / (np.sqrt(v / b2c) + self.eps)
            tensor.data -= lr * (update + self.cfg.weight_decay * tensor.data)

    def zero_grad(self) -> None:
        for tensor in self.params.tensors.values():
            tensor.grad = None


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------

def predict_dialogue(dialogue: Dialogue, params: ScorerParams,
                     decode_cfg: DecodeConfig = DecodeConfig(),
                     embedding_store=None) -> list[Quadruple]:
    from .scorer import forward
    grids = forward(dialogue, params, embedding_store=embedding_store)
    return decode(grids.argmax_grid(), decode_cfg, dialogue)


def predict(dialogues: Sequence[Dialogue], params: ScorerParams,
            decode_cfg: DecodeConfig = DecodeConfig(),
            embedding_store=None) -> list[dict]:
    """Argmax-decode every dialogue into prediction records."""
    records = []
    for d in dialogues:
        quads = predict_dialogue(d, params, decode_cfg, embedding_store)
        records.append({"doc_id": d.id,
                        "quadruples": [[q.target.start, q.target.end,
                                        q.aspect.start, q.aspect.end,
                                        q.opinion.start, q.opinion.end,
                                        q.polarity] for q in quads]})
    return records


def save_predictions(records: list[dict], path: str | Path) -> None:
    Path(path).write_text(json.dumps(records, ensure_ascii=False, indent=1),
                          encoding="utf-8")


def load_predictions(path: str | Path) -> list[dict]:
    return json.loads(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    params: ScorerParams
    best_params: ScorerParams
    history: list[dict]
    best_epoch: int
    best_dev_f1: float


def _dev_micro_f1(dev: Sequence[Dialogue], preps: list[PreparedDialogue],
                  params: ScorerParams, cfg: ModelConfig,
                  decode_cfg: DecodeConfig) -> tuple[float, float]:
    from .metrics import prf_from_counts
    tp = fp = fn = tp_iden = fp_iden = fn_iden = 0
    for d, prep in zip(dev, preps):
        ent, pair, pol = forward_tensors(prep, params, cfg, rng=None, train=False)
        grid = ScoreGrids(ent=ent.data, pair=pair.data, pol=pol.data).argmax_grid()
        pred = decode(grid, decode_cfg)
        pred_keys = {q.key() for q in pred}
        gold_keys = {q.key() for q in d.gold_quads}
        tp += len(pred_keys & gold_keys)
        fp += len(pred_keys - gold_keys)
        fn += len(gold_keys - pred_keys)
        pred_triples = {q.triple_key() for q in pred}
        gold_triples = {q.triple_key() for q in d.gold_quads}
        tp_iden += len(pred_triples & gold_triples)
        fp_iden += len(pred_triples - gold_triples)
        fn_iden += len(gold_triples - pred_triples)
    micro = prf_from_counts(tp, tp + fp, tp + fn).f1
    iden = prf_from_counts(tp_iden, tp_iden + fp_iden, tp_iden + fn_iden).f1
    return micro, iden


def train_loop(train_set: Sequence[Dialogue], dev_set: Sequence[Dialogue],
               model_cfg: ModelConfig = ModelConfig(),
               train_cfg: TrainConfig = TrainConfig(), *,
               out_dir: str | Path | None = None,
               embedding_store=None,
               state_path: str | Path | None = None,
               resume_from: str | Path | None = None,
               log_fn: Callable[[str], None] | None = None) -> TrainResult:
    """Train with per-epoch dev evaluation; keeps the best-dev checkpoint.

    The vocabulary is built from the training split only.  With a fixed seed
    the whole run, including the history file, is reproducible.  Passing
    ``state_path`` snapshots the full float64 state after every epoch;
    resuming from such a snapshot continues the original run bit for bit
    (only ``epochs`` is taken from the passed config on resume).
    """
    if not train_set:
        raise ValueError("empty training set")
    if not dev_set:
        raise ValueError("empty dev set")

    if resume_from is not None:
        state = TrainState.load(resume_from)
        params, optimizer, rng = state.params, state.optimizer, state.rng
        best_params, best_epoch, best_f1 = state.best_params, state.best_epoch, state.best_f1
        history, start_epoch = state.history, state.epoch
        model_cfg = params.config
        epochs = train_cfg.epochs
        train_cfg = state.train_cfg
        train_cfg.epochs = epochs
    else:
        vocab = None
        if model_cfg.embedding_source == EMBEDDING_TRAINABLE:
            vocab = build_vocabulary(train_set)
        params = ScorerParams.init(model_cfg, vocab, seed=train_cfg.seed)
        optimizer = AdamW(params, train_cfg)
        rng = np.random.default_rng(train_cfg.seed)
        best_params, best_epoch, best_f1 = params.copy(), 0, -1.0
        history, start_epoch = [], 0

    decode_cfg = DecodeConfig(pair_mode=train_cfg.pair_mode)
    train_preps = [prepare_dialogue(d, model_cfg, params.vocab, embedding_store)
                   for d in train_set]
    dev_preps = [prepare_dialogue(d, model_cfg, params.vocab, embedding_store)
                 for d in dev_set]
    golds = [encode(d) for d in train_set]

    for epoch in range(start_epoch, train_cfg.epochs):
        order = rng.permutation(len(train_preps))
        epoch_loss, n_seen = 0.0, 0
        for batch_id, lo in enumerate(range(0, len(order), train_cfg.batch_size)):
            batch = order[lo:lo + train_cfg.batch_size]
            totals = []
            for idx in batch:
                logits = forward_tensors(train_preps[idx], params, model_cfg,
                                         rng=rng, train=True)
                total, breakdown = _loss_tensor(logits, golds[idx], train_cfg)
                totals.append(total)
                epoch_loss += breakdown.total
                n_seen += 1
            batch_loss = ag.scale(_sum(totals), 1.0 / len(batch))
            if not np.isfinite(batch_loss.item()):
                raise TrainingDiverged(
                    f"non-finite loss in epoch {epoch} batch {batch_id} "
                    f"(dialogues {[train_preps[i].doc_id for i in batch]})")
            optimizer.zero_grad()
            backward(batch_loss)
            optimizer.clip_gradients()
            optimizer.step()
        train_loss = epoch_loss / max(n_seen, 1)
        dev_micro, dev_iden = _dev_micro_f1(dev_set, dev_preps, params, model_cfg,
                                            decode_cfg)
        history.append({"epoch": epoch, "train_loss": train_loss,
                        "dev_micro_f1": dev_micro, "dev_iden_f1": dev_iden})
        if log_fn is not None:
            log_fn(f"epoch {epoch}: train_loss {train_loss:.6f} "
                   f"dev_micro_f1 {dev_micro:.4f} dev_iden_f1 {dev_iden:.4f}")
        if dev_micro > best_f1:
            best_f1, best_epoch = dev_micro, epoch
            best_params = params.copy()
        if state_path is not None:
            TrainState(params=params, optimizer=optimizer, rng=rng,
                       best_params=best_params, best_epoch=best_epoch,
                       best_f1=best_f1, epoch=epoch + 1, history=history,
                       train_cfg=train_cfg).save(state_path)

    result = TrainResult(params=params, best_params=best_params, history=history,
                         best_epoch=best_epoch, best_dev_f1=best_f1)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(best_params, out / "model.dqsk")
        write_history(history, out / "history.jsonl")
    return result


def _sum(tensors: list[Tensor]) -> Tensor:
    acc = tensors[0]
    for t in tensors[1:]:
        acc = ag.add(acc, t)
    return acc


def write_history(history: list[dict], path: str | Path) -> None:
    lines = [json.dumps(entry, sort_keys=True) for entry in history]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Resumable state
# ---------------------------------------------------------------------------

@dataclass
class TrainState:
    """Full losslessly-serialized training state (float64, RNG included)."""

    params: ScorerParams
    optimizer: AdamW
    rng: np.random.Generator
    best_params: ScorerParams
    best_epoch: int
    best_f1: float
    epoch: int
    history: list[dict]
    train_cfg: TrainConfig

    def save(self, path: str | Path) -> None:
        arrays: dict[str, np.ndarray] = {}
        for name, tensor in self.params.tensors.items():
            arrays[f"param/{name}"] = tensor.data
            arrays[f"adam_m/{name}"] = self.optimizer.m[name]
            arrays[f"adam_v/{name}"] = self.optimizer.v[name]
        for name, tensor in self.best_params.tensors.items():
            arrays[f"best/{name}"] = tensor.data
        meta = {
            "model": self.params.config.to_dict(),
            "train": self.train_cfg.to_dict(),
            "vocab": self.params.vocab.tokens[2:] if self.params.vocab else None,
            "step": self.optimizer.step_count,
            "epoch": self.epoch,
            "best_epoch": self.best_epoch,
            "best_f1": self.best_f1,
            "history": self.history,
            "rng_state": self.rng.bit_generator.state,
        }
        arrays["meta"] = np.array(json.dumps(meta))
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path: str | Path) -> "TrainState":
        data = np.load(path, allow_pickle=False)
        meta = json.loads(str(data["meta"]))
        model_cfg = ModelConfig.from_dict(meta["model"])
        train_cfg = TrainConfig.from_dict(meta["train"])
        vocab = Vocabulary(meta["vocab"]) if meta["vocab"] is not None else None
        names = [k[len("param/"):] for k in data.files if k.startswith("param/")]
        params = ScorerParams(model_cfg, {n: Tensor(data[f"param/{n}"], requires_grad=True)
                                          for n in names}, vocab)
        best = ScorerParams(model_cfg, {n: Tensor(data[f"best/{n}"], requires_grad=True)
                                        for n in names}, vocab)
        optimizer = AdamW(params, train_cfg)
        optimizer.step_count = meta["step"]
        optimizer.m = {n: data[f"adam_m/{n}"].copy() for n in names}
        optimizer.v = {n: data[f"adam_v/{n}"].copy() for n in names}
        rng = np.random.default_rng()
        rng.bit_generator.state = meta["rng_state"]
        return cls(params=params, optimizer=optimizer, rng=rng, best_params=best,
                   best_epoch=meta["best_epoch"], best_f1=meta["best_f1"],
                   epoch=meta["epoch"], history=meta["history"], train_cfg=train_cfg)
