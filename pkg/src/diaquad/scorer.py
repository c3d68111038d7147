"""Neural grid scorer: embeddings, per-utterance encoding, multi-view masked
attention, tag-wise projections, rotary-rotated pair scores.

The forward pass maps one dialogue to three N x N x L logit grids (entity,
pair, polarity).  Token vectors come either from a trainable embedding table
with a small per-utterance self-attention encoder, or from a frozen external
embedding file.  Three masked attention views (thread / speaker / reply) are
fused by elementwise max, projected once per label, and scored pairwise with
rotations that realize the signed thread-pair distances, so each cell's score
depends on the relative distance only.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .codec import ENT_NAMES, LabelGrid, PAIR_NAMES, POL_NAMES
from .corpus import Dialogue, Vocabulary
from .structure import (MaskSet, RotaryMap, assign_threads, build_masks, local_positions,
                        thread_pair_selectors, token_threads)

LABEL_NAMES = tuple([f"ent.{n}" for n in ENT_NAMES]
                    + [f"pair.{n}" for n in PAIR_NAMES]
                    + [f"pol.{n}" for n in POL_NAMES])
N_LABELS = len(LABEL_NAMES)
ENT_SLICE = (0, 4)
PAIR_SLICE = (4, 7)
POL_SLICE = (7, 11)

VIEWS = ("thread", "speaker", "reply")

CHECKPOINT_MAGIC = b"DQSK"
CHECKPOINT_VERSION = 1

EMBEDDING_TRAINABLE = "trainable"
EMBEDDING_EXTERNAL = "external-frozen"


class ScorerError(ValueError):
    """Configuration or input mismatch in the scoring model."""


@dataclass
class ModelConfig:
    d_model: int = 64
    n_heads: int = 4
    base_layers: int = 1
    ffn_dim: int = 128
    tag_dim: int = 64
    theta: float = 10000.0
    dropout: float = 0.2
    embedding_source: str = EMBEDDING_TRAINABLE

    def __post_init__(self) -> None:
        if self.d_model <= 0 or self.d_model % 2 != 0:
            raise ScorerError(f"d_model must be a positive even integer, got {self.d_model}")
        if self.n_heads <= 0 or self.d_model % self.n_heads != 0:
            raise ScorerError(f"n_heads must divide d_model, got {self.n_heads}/{self.d_model}")
        if self.base_layers < 0:
            raise ScorerError("base_layers must be >= 0")
        if self.tag_dim <= 0 or self.tag_dim % 2 != 0:
            raise ScorerError(f"tag_dim must be a positive even integer, got {self.tag_dim}")
        if not 0.0 <= self.dropout < 1.0:
            raise ScorerError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.embedding_source not in (EMBEDDING_TRAINABLE, EMBEDDING_EXTERNAL):
            raise ScorerError(f"unknown embedding_source {self.embedding_source!r}")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("d_model", "n_heads", "base_layers", "ffn_dim", "tag_dim",
                 "theta", "dropout", "embedding_source")}

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return cls(**data)


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

class ScorerParams:
    """Named parameter tensors plus the config (and vocabulary) they belong to.

    Tensors live as float64 autograd leaves; checkpoints store them as
    row-major float32, little-endian.
    """

    def __init__(self, config: ModelConfig, tensors: dict[str, Tensor],
                 vocab: Vocabulary | None = None):
        self.config = config
        self.tensors = tensors
        self.vocab = vocab

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def names(self) -> list[str]:
        return list(self.tensors)

    def group_of(self, name: str) -> str:
        """Optimizer group: token/base encoding vs attention heads and tags."""
        return "encoder" if name.startswith(("embedding.", "base")) else "head"

    def copy(self) -> "ScorerParams":
        tensors = {k: Tensor(v.data.copy(), requires_grad=True)
                   for k, v in self.tensors.items()}
        return ScorerParams(self.config, tensors, self.vocab)

    @classmethod
    def init(cls, config: ModelConfig, vocab: Vocabulary | None = None,
             seed: int = 0) -> "ScorerParams":
        if config.embedding_source == EMBEDDING_TRAINABLE and vocab is None:
            raise ScorerError("trainable embeddings need a vocabulary")
        rng = np.random.default_rng(seed)
        d, f, t = config.d_model, config.ffn_dim, config.tag_dim
        tensors: dict[str, np.ndarray] = {}

        def xavier(*shape):
            fan_in, fan_out = shape[-2], shape[-1]
            return rng.normal(0.0, np.sqrt(2.0 / (fan_in + fan_out)), size=shape)

        if config.embedding_source == EMBEDDING_TRAINABLE:
            tensors["embedding.table"] = rng.normal(0.0, 0.1, size=(len(vocab), d))
            tensors["embedding.cls"] = rng.normal(0.0, 0.1, size=(d,))
            tensors["embedding.sep"] = rng.normal(0.0, 0.1, size=(d,))
            for i in range(config.base_layers):
                p = f"base{i}."
                for m in ("wq", "wk", "wv", "wo"):
                    tensors[p + "attn." + m] = xavier(d, d)
                    if m != "wk":  # a key bias cancels inside the row softmax
                        tensors[p + "attn.b" + m[1]] = np.zeros(d)
                tensors[p + "ln1.gain"] = np.ones(d)
                tensors[p + "ln1.bias"] = np.zeros(d)
                tensors[p + "ffn.w1"] = xavier(d, f)
                tensors[p + "ffn.b1"] = np.zeros(f)
                tensors[p + "ffn.w2"] = xavier(f, d)
                tensors[p + "ffn.b2"] = np.zeros(d)
                tensors[p + "ln2.gain"] = np.ones(d)
                tensors[p + "ln2.bias"] = np.zeros(d)
        for view in VIEWS:
            p = f"view.{view}."
            for m in ("wq", "wk", "wv", "wo"):
                tensors[p + m] = xavier(d, d)
                if m != "wk":
                    tensors[p + "b" + m[1]] = np.zeros(d)
        tensors["tags.w"] = xavier(N_LABELS, d, t)
        tensors["tags.b"] = np.zeros((N_LABELS, t))
        wrapped = {k: Tensor(v, requires_grad=True) for k, v in tensors.items()}
        return cls(config, wrapped, vocab)


def save_checkpoint(params: ScorerParams, path: str | Path) -> None:
    """Write the DQSK container: magic, version, config block, named tensors."""
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", CHECKPOINT_VERSION))
    config = {"model": params.config.to_dict(),
              "vocab": params.vocab.tokens[2:] if params.vocab is not None else None}
    blob = json.dumps(config, ensure_ascii=False).encode("utf-8")
    buf.write(struct.pack("<I", len(blob)))
    buf.write(blob)
    buf.write(struct.pack("<I", len(params.tensors)))
    for name in params.names():
        data = params.tensors[name].data
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<B", data.ndim))
        buf.write(struct.pack(f"<{data.ndim}I", *data.shape))
        buf.write(np.ascontiguousarray(data, dtype="<f4").tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path: str | Path) -> ScorerParams:
    raw = Path(path).read_bytes()
    view = memoryview(raw)
    if view[:4] != CHECKPOINT_MAGIC:
        raise ScorerError(f"{path}: not a model checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", view, 4)
    if version != CHECKPOINT_VERSION:
        raise ScorerError(f"{path}: unsupported checkpoint version {version}")
    (config_len,) = struct.unpack_from("<I", view, 8)
    offset = 12
    config = json.loads(bytes(view[offset:offset + config_len]).decode("utf-8"))
    offset += config_len
    (count,) = struct.unpack_from("<I", view, offset)
    offset += 4
    tensors: dict[str, Tensor] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", view, offset)
        offset += 2
        name = bytes(view[offset:offset + name_len]).decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack_from("<B", view, offset)
        offset += 1
        shape = struct.unpack_from(f"<{rank}I", view, offset)
        offset += 4 * rank
        size = int(np.prod(shape)) if rank else 1
        data = np.frombuffer(view, dtype="<f4", count=size, offset=offset).reshape(shape)
        offset += 4 * size
        tensors[name] = Tensor(data.astype(np.float64), requires_grad=True)
    vocab = Vocabulary(config["vocab"]) if config.get("vocab") is not None else None
    return ScorerParams(ModelConfig.from_dict(config["model"]), tensors, vocab)


# ---------------------------------------------------------------------------
# Prepared per-dialogue features
# ---------------------------------------------------------------------------

@dataclass
class PreparedDialogue:
    doc_id: str
    n: int
    utterance_lengths: list[int]
    token_ids: list[np.ndarray] | None
    external_rows: np.ndarray | None
    masks: MaskSet
    same_sel: np.ndarray
    lt_sel: np.ndarray
    gt_sel: np.ndarray
    positions: np.ndarray
    gold: LabelGrid | None = None


def prepare_dialogue(dialogue: Dialogue, cfg: ModelConfig,
                     vocab: Vocabulary | None = None,
                     embedding_store=None) -> PreparedDialogue:
    """Precompute all structure-derived arrays a forward pass needs."""
    threads = assign_threads(dialogue)
    masks = build_masks(dialogue, threads)
    tok_threads = token_threads(dialogue, threads)
    same, lt, gt = thread_pair_selectors(tok_threads)
    positions = local_positions(dialogue)

    token_ids = None
    external_rows = None
    if cfg.embedding_source == EMBEDDING_TRAINABLE:
        if vocab is None:
            raise ScorerError("trainable embeddings need a vocabulary")
        token_ids = [np.asarray(vocab.encode(t.text for t in utt.tokens))
                     for utt in dialogue.utterances]
    else:
        if embedding_store is None:
            raise ScorerError(f"{dialogue.id}: external embeddings requested "
                              "but no embedding file given")
        external_rows = embedding_store.rows(dialogue.id)
        if external_rows.shape[0] != dialogue.n_tokens:
            raise ScorerError(
                f"{dialogue.id}: embedding file has {external_rows.shape[0]} rows, "
                f"corpus has {dialogue.n_tokens} tokens")
        if external_rows.shape[1] != cfg.d_model:
            raise ScorerError(
                f"{dialogue.id}: embedding dimension {external_rows.shape[1]} "
                f"!= d_model {cfg.d_model}")
    return PreparedDialogue(
        doc_id=dialogue.id, n=dialogue.n_tokens,
        utterance_lengths=[len(u) for u in dialogue.utterances],
        token_ids=token_ids, external_rows=external_rows, masks=masks,
        same_sel=same.astype(np.float64), lt_sel=lt.astype(np.float64),
        gt_sel=gt.astype(np.float64), positions=positions)


def _sinusoid(length: int, dim: int) -> np.ndarray:
    pos = np.arange(length, dtype=np.float64)[:, None]
    k = np.arange(dim // 2, dtype=np.float64)
    ang = pos / (10000.0 ** (2.0 * k / dim))
    out = np.empty((length, dim))
    out[:, 0::2] = np.sin(ang)
    out[:, 1::2] = np.cos(ang)
    return out


def _mha(x: Tensor, neg_mask: np.ndarray | None, params: ScorerParams,
         prefix: str, cfg: ModelConfig) -> Tensor:
    n = x.shape[0]
    heads, dh = cfg.n_heads, cfg.d_model // cfg.n_heads

    def split(t: Tensor) -> Tensor:
        return ag.permute(ag.reshape(t, (n, heads, dh)), (1, 0, 2))

    q = split(ag.add(ag.matmul(x, params[prefix + "wq"]), params[prefix + "bq"]))
    k = split(ag.matmul(x, params[prefix + "wk"]))
    v = split(ag.add(ag.matmul(x, params[prefix + "wv"]), params[prefix + "bv"]))
    scores = ag.scale(ag.matmul(q, ag.transpose_last2(k)), 1.0 / np.sqrt(dh))
    if neg_mask is not None:
        scores = ag.add(scores, neg_mask)
    ctx = ag.matmul(ag.softmax_last(scores), v)
    merged = ag.reshape(ag.permute(ctx, (1, 0, 2)), (n, cfg.d_model))
    return ag.add(ag.matmul(merged, params[prefix + "wo"]), params[prefix + "bo"])


def _base_block(x: Tensor, params: ScorerParams, layer: int, cfg: ModelConfig) -> Tensor:
    p = f"base{layer}."
    attn = _mha(x, None, params, p + "attn.", cfg)
    x = ag.layer_norm(ag.add(x, attn), params[p + "ln1.gain"], params[p + "ln1.bias"])
    hidden = ag.gelu(ag.add(ag.matmul(x, params[p + "ffn.w1"]), params[p + "ffn.b1"]))
    ffn = ag.add(ag.matmul(hidden, params[p + "ffn.w2"]), params[p + "ffn.b2"])
    return ag.layer_norm(ag.add(x, ffn), params[p + "ln2.gain"], params[p + "ln2.bias"])


def _embed_tensors(prep: PreparedDialogue, params: ScorerParams, cfg: ModelConfig,
                   rng: np.random.Generator | None, train: bool) -> Tensor:
    if cfg.embedding_source == EMBEDDING_EXTERNAL:
        h = Tensor(prep.external_rows.astype(np.float64))
    else:
        pieces = []
        cls = ag.reshape(params["embedding.cls"], (1, cfg.d_model))
        sep = ag.reshape(params["embedding.sep"], (1, cfg.d_model))
        for ids in prep.token_ids:
            seq = ag.concat_rows([cls, ag.embedding(params["embedding.table"], ids), sep])
            if cfg.base_layers > 0:
                seq = ag.add(seq, _sinusoid(len(ids) + 2, cfg.d_model))
                for layer in range(cfg.base_layers):
                    seq = _base_block(seq, params, layer, cfg)
            pieces.append(ag.narrow_rows(seq, 1, len(ids) + 1))
        h = ag.concat_rows(pieces)
    if train and cfg.dropout > 0.0:
        if rng is None:
            raise ScorerError("training forward needs an RNG for dropout")
        h = ag.dropout(h, cfg.dropout, rng)
    return h


def _neg_mask(mask: np.ndarray) -> np.ndarray:
    # Additive masking: disallowed cells get a large negative pre-softmax score.
    return np.where(mask, 0.0, -1e9)


def _multi_view_tensors(h: Tensor, masks: MaskSet, params: ScorerParams,
                        cfg: ModelConfig) -> Tensor:
    outs = []
    for view, mask in zip(VIEWS, (masks.th, masks.sp, masks.rp)):
        outs.append(_mha(h, _neg_mask(mask), params, f"view.{view}.", cfg))
    return ag.maximum(ag.maximum(outs[0], outs[1]), outs[2])


def _projection_tensors(h_fused: Tensor, params: ScorerParams, cfg: ModelConfig) -> Tensor:
    n = h_fused.shape[0]
    v = ag.matmul(ag.reshape(h_fused, (1, n, cfg.d_model)), params["tags.w"])
    return ag.add(v, ag.reshape(params["tags.b"], (N_LABELS, 1, cfg.tag_dim)))


def _score_tensors(v: Tensor, prep: PreparedDialogue, cfg: ModelConfig) -> Tensor:
    rmap = RotaryMap(dim=cfg.tag_dim, theta=cfg.theta)
    ang = prep.positions[:, None] * rmap.frequencies
    cos, sin = np.cos(ang), np.sin(ang)
    fwd = ag.rotate_pairs(v, cos, sin)          # rotation by +P
    bwd = ag.rotate_pairs(v, cos, -sin)         # rotation by -P
    s_same = ag.matmul(bwd, ag.transpose_last2(bwd))
    s_low = ag.matmul(fwd, ag.transpose_last2(bwd))
    return ag.add(ag.add(ag.mul(s_same, prep.same_sel), ag.mul(s_low, prep.lt_sel)),
                  ag.mul(ag.transpose_last2(s_low), prep.gt_sel))


def forward_tensors(prep: PreparedDialogue, params: ScorerParams, cfg: ModelConfig,
                    rng: np.random.Generator | None = None,
                    train: bool = False) -> tuple[Tensor, Tensor, Tensor]:
    """Full pass returning (ent, pair, pol) logit Tensors of shape (N, N, L)."""
    h = _embed_tensors(prep, params, cfg, rng, train)
    fused = _multi_view_tensors(h, prep.masks, params, cfg)
    v = _projection_tensors(fused, params, cfg)
    scores = _score_tensors(v, prep, cfg)
    ent = ag.permute(ag.narrow_rows(scores, *ENT_SLICE), (1, 2, 0))
    pair = ag.permute(ag.narrow_rows(scores, *PAIR_SLICE), (1, 2, 0))
    pol = ag.permute(ag.narrow_rows(scores, *POL_SLICE), (1, 2, 0))
    return ent, pair, pol


# ---------------------------------------------------------------------------
# Inference surface
# ---------------------------------------------------------------------------

def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class ScoreGrids:
    """Per-matrix logits (N, N, L) and their per-cell softmax probabilities."""

    ent: np.ndarray
    pair: np.ndarray
    pol: np.ndarray

    @property
    def n(self) -> int:
        return self.ent.shape[0]

    def probabilities(self) -> dict[str, np.ndarray]:
        return {"ent": _softmax(self.ent), "pair": _softmax(self.pair),
                "pol": _softmax(self.pol)}

    def argmax_grid(self) -> LabelGrid:
        return LabelGrid(ent=self.ent.argmax(axis=-1).astype(np.int8),
                         pair=self.pair.argmax(axis=-1).astype(np.int8),
                         pol=self.pol.argmax(axis=-1).astype(np.int8))


def forward(dialogue: Dialogue | PreparedDialogue, params: ScorerParams,
            cfg: ModelConfig | None = None, embedding_store=None) -> ScoreGrids:
    """Deterministic inference pass (dropout disabled)."""
    cfg = cfg or params.config
    prep = (dialogue if isinstance(dialogue, PreparedDialogue)
            else prepare_dialogue(dialogue, cfg, params.vocab, embedding_store))
    ent, pair, pol = forward_tensors(prep, params, cfg, rng=None, train=False)
    return ScoreGrids(ent=ent.data, pair=pair.data, pol=pol.data)


def embed_dialogue(dialogue: Dialogue, params: ScorerParams,
                   cfg: ModelConfig | None = None, embedding_store=None) -> np.ndarray:
    """Base token encodings, one row per corpus token (sentinels stripped)."""
    cfg = cfg or params.config
    prep = prepare_dialogue(dialogue, cfg, params.vocab, embedding_store)
    return _embed_tensors(prep, params, cfg, rng=None, train=False).data


def view_attention(h: np.ndarray, mask: np.ndarray, params: ScorerParams,
                   view: str, cfg: ModelConfig | None = None) -> np.ndarray:
    """One masked attention view over an encoded sequence."""
    cfg = cfg or params.config
    if view not in VIEWS:
        raise ScorerError(f"unknown view {view!r}")
    return _mha(Tensor(h), _neg_mask(np.asarray(mask, dtype=bool)),
                params, f"view.{view}.", cfg).data


def multi_view_attention(h: np.ndarray, masks: MaskSet, params: ScorerParams,
                         cfg: ModelConfig | None = None) -> np.ndarray:
    """Max-pooled fusion of the thread, speaker, and reply attention views."""
    cfg = cfg or params.config
    return _multi_view_tensors(Tensor(h), masks, params, cfg).data


def tag_projection(h_fused: np.ndarray, params: ScorerParams,
                   cfg: ModelConfig | None = None) -> np.ndarray:
    """Per-label projected sequences, shape (n_labels, N, tag_dim)."""
    cfg = cfg or params.config
    return _projection_tensors(Tensor(h_fused), params, cfg).data


def score_grids(v: np.ndarray, prep: PreparedDialogue,
                cfg: ModelConfig) -> ScoreGrids:
    """Pairwise rotary scores from projected label sequences."""
    scores = _score_tensors(Tensor(v), prep, cfg).data
    return ScoreGrids(ent=np.transpose(scores[slice(*ENT_SLICE)], (1, 2, 0)),
                      pair=np.transpose(scores[slice(*PAIR_SLICE)], (1, 2, 0)),
                      pol=np.transpose(scores[slice(*POL_SLICE)], (1, 2, 0)))
