"""Dialogue-tree structure: thread assignment, interaction masks, relative positions.

Threads partition the reply tree: the root utterance alone is thread 0, and
each subtree hanging off a root child is one thread, numbered by the child's
utterance index.  Token-level local positions count tokens along the
root-to-owner utterance path, and pairwise relative distances combine the
local positions of two tokens with signs determined by their thread pair, so
that cross-thread distances measure the path through the root.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .corpus import Dialogue


class StructureError(ValueError):
    """The reply record does not form a usable tree."""


@dataclass
class ThreadAssignment:
    """Thread id per utterance; 0 is the root, k>=1 the k-th root-child subtree."""

    thread_of: list[int]
    root: int
    n_threads: int


def assign_threads(dialogue: Dialogue) -> ThreadAssignment:
    roots = [u.index for u in dialogue.utterances if u.is_root]
    if len(roots) != 1:
        raise StructureError(
            f"{dialogue.id}: reply record has {len(roots)} roots, expected exactly 1")
    root = roots[0]
    parents = [u.reply_to for u in dialogue.utterances]
    thread_of = [0] * dialogue.n_utterances
    next_thread = 1
    for ui in range(dialogue.n_utterances):
        if ui == root:
            continue
        if parents[ui] == root:
            thread_of[ui] = next_thread
            next_thread += 1
        else:
            # Parents precede children, so the parent's id is already final.
            thread_of[ui] = thread_of[parents[ui]]
    return ThreadAssignment(thread_of=thread_of, root=root, n_threads=next_thread)


def token_utterances(dialogue: Dialogue) -> np.ndarray:
    """Owning utterance index for every token, shape (N,)."""
    return np.repeat(np.arange(dialogue.n_utterances),
                     [len(u) for u in dialogue.utterances])


def token_threads(dialogue: Dialogue, threads: ThreadAssignment) -> np.ndarray:
    return np.asarray(threads.thread_of)[token_utterances(dialogue)]


@dataclass
class MaskSet:
    """Boolean N x N interaction masks: same thread, same speaker, reply link."""

    th: np.ndarray
    sp: np.ndarray
    rp: np.ndarray

    def as_dict(self) -> dict[str, np.ndarray]:
        return {"th": self.th, "sp": self.sp, "rp": self.rp}


def build_masks(dialogue: Dialogue, threads: ThreadAssignment | None = None) -> MaskSet:
    """Token-level interaction masks.

    The root utterance counts as belonging to every thread, and tokens of one
    utterance always see each other under the reply view, so no row of any
    mask is ever all zero.
    """
    if threads is None:
        threads = assign_threads(dialogue)
    utt = token_utterances(dialogue)
    th = np.asarray(threads.thread_of)[utt]
    sp = np.asarray([u.speaker for u in dialogue.utterances])[utt]
    parent = np.asarray([u.reply_to for u in dialogue.utterances])[utt]

    same_thread = th[:, None] == th[None, :]
    root_involved = (utt[:, None] == threads.root) | (utt[None, :] == threads.root)
    m_th = same_thread | root_involved

    m_sp = sp[:, None] == sp[None, :]

    same_utt = utt[:, None] == utt[None, :]
    replies = (parent[:, None] == utt[None, :]) | (parent[None, :] == utt[:, None])
    m_rp = same_utt | replies
    return MaskSet(th=m_th, sp=m_sp, rp=m_rp)


def local_positions(dialogue: Dialogue) -> np.ndarray:
    """Token distance from the root: tokens preceding the owner utterance along
    the root-to-owner reply path, plus the token's offset inside its utterance."""
    lengths = [len(u) for u in dialogue.utterances]
    parents = [u.reply_to for u in dialogue.utterances]
    base = [0] * dialogue.n_utterances
    for ui in range(dialogue.n_utterances):
        if parents[ui] >= 0:
            base[ui] = base[parents[ui]] + lengths[parents[ui]]
    out = np.empty(dialogue.n_tokens, dtype=np.int64)
    pos = 0
    for ui, n in enumerate(lengths):
        out[pos:pos + n] = base[ui] + np.arange(n)
        pos += n
    return out


def pairwise_delta(i: int, j: int, token_thread: np.ndarray, local: np.ndarray) -> int:
    """Signed relative distance between tokens i and j.

    Same thread (or either token in the root thread): plain difference of
    local positions.  Across threads the lower-numbered thread's position is
    negated, so the distance runs through the root.
    """
    ti, tj = int(token_thread[i]), int(token_thread[j])
    pi, pj = int(local[i]), int(local[j])
    if ti * tj == 0 or ti == tj:
        return pi - pj
    if ti < tj:
        return -pi - pj
    return pi + pj


def delta_matrix(dialogue: Dialogue, threads: ThreadAssignment | None = None) -> np.ndarray:
    """Full N x N signed relative-distance matrix."""
    if threads is None:
        threads = assign_threads(dialogue)
    th = token_threads(dialogue, threads)
    p = local_positions(dialogue)
    same = (th[:, None] == th[None, :]) | (th[:, None] == 0) | (th[None, :] == 0)
    lt = th[:, None] < th[None, :]
    out = np.where(same, p[:, None] - p[None, :],
                   np.where(lt, -p[:, None] - p[None, :], p[:, None] + p[None, :]))
    return out.astype(np.int64)


def thread_pair_selectors(token_thread: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cell masks (same-or-root, lower-vs-higher, higher-vs-lower) that
    partition the grid by thread-pair sign case."""
    th = np.asarray(token_thread)
    same = (th[:, None] == th[None, :]) | (th[:, None] == 0) | (th[None, :] == 0)
    lt = (th[:, None] < th[None, :]) & ~same
    gt = (th[:, None] > th[None, :]) & ~same
    return same, lt, gt


# ---------------------------------------------------------------------------
# Rotary rotations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RotaryMap:
    """Planar-rotation family R(theta, m): d/2 rotations with angles m * theta^(-2k/d)."""

    dim: int
    theta: float = 10000.0

    def __post_init__(self) -> None:
        if self.dim <= 0 or self.dim % 2 != 0:
            raise ValueError(f"rotary dimension must be a positive even integer, got {self.dim}")

    @cached_property
    def frequencies(self) -> np.ndarray:
        k = np.arange(self.dim // 2, dtype=np.float64)
        return self.theta ** (-2.0 * k / self.dim)


def rotation_angles(rmap: RotaryMap, m) -> np.ndarray:
    """Angles per plane for position(s) m; shape broadcast of m with (d/2,)."""
    m = np.asarray(m, dtype=np.float64)
    return m[..., None] * rmap.frequencies


def rotate(v: np.ndarray, m, rmap: RotaryMap) -> np.ndarray:
    """Apply R(theta, m) to vectors in the trailing dimension.

    ``v`` has shape (..., d) with d == rmap.dim; ``m`` is a scalar or an array
    broadcastable against the leading dimensions.  Norms are preserved.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != rmap.dim:
        raise ValueError(f"vector dimension {v.shape[-1]} != rotary dimension {rmap.dim}")
    ang = rotation_angles(rmap, m)
    cos, sin = np.cos(ang), np.sin(ang)
    even, odd = v[..., 0::2], v[..., 1::2]
    out = np.empty_like(v)
    out[..., 0::2] = even * cos - odd * sin
    out[..., 1::2] = even * sin + odd * cos
    return out


def rotation_matrix(rmap: RotaryMap, m: float) -> np.ndarray:
    """Dense d x d matrix of R(theta, m); block-diagonal of 2x2 rotations."""
    ang = rotation_angles(rmap, float(m))
    out = np.zeros((rmap.dim, rmap.dim))
    cos, sin = np.cos(ang), np.sin(ang)
    idx = np.arange(rmap.dim // 2)
    out[2 * idx, 2 * idx] = cos
    out[2 * idx, 2 * idx + 1] = -sin
    out[2 * idx + 1, 2 * idx] = sin
    out[2 * idx + 1, 2 * idx + 1] = cos
    return out


# ---------------------------------------------------------------------------
# Debug export
# ---------------------------------------------------------------------------

def structure_dump(dialogue: Dialogue) -> dict:
    """Masks and the delta matrix as plain lists, for fixtures and debugging."""
    threads = assign_threads(dialogue)
    masks = build_masks(dialogue, threads)
    return {
        "doc_id": dialogue.id,
        "n": dialogue.n_tokens,
        "threads": list(threads.thread_of),
        "local_positions": local_positions(dialogue).tolist(),
        "masks": {name: mask.astype(int).tolist() for name, mask in masks.as_dict().items()},
        "delta": delta_matrix(dialogue, threads).tolist(),
    }
