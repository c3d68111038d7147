"""Minimal reverse-mode automatic differentiation over numpy arrays.

Just enough machinery for the scorer: a Tensor wrapper recording parents and
vector-Jacobian callbacks, plus the handful of ops the model needs.  All math
runs in float64.  Non-Tensor operands are treated as constants and receive no
gradient.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjps")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._vjps: tuple = ()

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return add(self, scale(other, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents: tuple[Tensor, ...], vjps: tuple) -> Tensor:
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
    if out.requires_grad:
        out._parents = parents
        out._vjps = vjps
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient back down to the shape it was broadcast from."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def backward(root: Tensor) -> None:
    """Accumulate gradients of a scalar root into every reachable Tensor."""
    if root.data.shape != ():
        raise ValueError("backward expects a scalar root")
    if not root.requires_grad:
        return
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    for node in topo:
        node.grad = None
    root.grad = np.ones(())
    for node in reversed(topo):
        g = node.grad
        for parent, vjp in zip(node._parents, node._vjps):
            if not parent.requires_grad:
                continue
            contrib = vjp(g)
            parent.grad = contrib if parent.grad is None else parent.grad + contrib


# ---------------------------------------------------------------------------
# Elementwise and linear ops
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _make(a.data + b.data, (a, b),
                 (lambda g: _unbroadcast(g, a.data.shape),
                  lambda g: _unbroadcast(g, b.data.shape)))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _make(a.data * b.data, (a, b),
                 (lambda g: _unbroadcast(g * b.data, a.data.shape),
                  lambda g: _unbroadcast(g * a.data, b.data.shape)))


def scale(a, c: float) -> Tensor:
    a = _as_tensor(a)
    c = float(c)
    return _make(a.data * c, (a,), (lambda g: g * c,))


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ValueError("matmul operands must have rank >= 2")
    return _make(np.matmul(a.data, b.data), (a, b),
                 (lambda g: _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)),
                                         a.data.shape),
                  lambda g: _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g),
                                         b.data.shape)))


def transpose_last2(a) -> Tensor:
    a = _as_tensor(a)
    return _make(np.swapaxes(a.data, -1, -2), (a,),
                 (lambda g: np.swapaxes(g, -1, -2),))


def permute(a, axes: tuple[int, ...]) -> Tensor:
    a = _as_tensor(a)
    inverse = tuple(int(i) for i in np.argsort(axes))
    return _make(np.transpose(a.data, axes), (a,),
                 (lambda g: np.transpose(g, inverse),))


def reshape(a, shape: tuple[int, ...]) -> Tensor:
    a = _as_tensor(a)
    old = a.data.shape
    return _make(a.data.reshape(shape), (a,), (lambda g: g.reshape(old),))


def concat_rows(parts: list[Tensor]) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    data = np.concatenate([p.data for p in parts], axis=0)
    sizes = [p.data.shape[0] for p in parts]
    edges = np.cumsum([0, *sizes])

    def make_vjp(i):
        return lambda g: g[edges[i]:edges[i + 1]]

    return _make(data, tuple(parts), tuple(make_vjp(i) for i in range(len(parts))))


def narrow_rows(a, start: int, stop: int) -> Tensor:
    a = _as_tensor(a)

    def vjp(g):
        out = np.zeros_like(a.data)
        out[start:stop] = g
        return out

    return _make(a.data[start:stop], (a,), (vjp,))


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids)

    def vjp(g):
        out = np.zeros_like(table.data)
        np.add.at(out, ids, g)
        return out

    return _make(table.data[ids], (table,), (vjp,))


def sum_all(a) -> Tensor:
    a = _as_tensor(a)
    return _make(a.data.sum(), (a,), (lambda g: np.broadcast_to(g, a.data.shape).copy(),))


# ---------------------------------------------------------------------------
# Nonlinearities and normalization
# ---------------------------------------------------------------------------

def gelu(a) -> Tensor:
    a = _as_tensor(a)
    x = a.data
    phi = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    out = x * phi
    dens = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return _make(out, (a,), (lambda g: g * (phi + x * dens),))


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = gamma.data * xhat + beta.data
    lead = tuple(range(out.ndim - 1))

    def vjp_x(g):
        gh = g * gamma.data
        return inv * (gh - gh.mean(axis=-1, keepdims=True)
                      - xhat * (gh * xhat).mean(axis=-1, keepdims=True))

    return _make(out, (x, gamma, beta),
                 (vjp_x,
                  lambda g: (g * xhat).sum(axis=lead),
                  lambda g: g.sum(axis=lead)))


def softmax_last(a) -> Tensor:
    a = _as_tensor(a)
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)
    return _make(s, (a,),
                 (lambda g: (g - (g * s).sum(axis=-1, keepdims=True)) * s,))


def maximum(a, b) -> Tensor:
    """Elementwise max; ties route the gradient to the first operand."""
    a, b = _as_tensor(a), _as_tensor(b)
    take_a = a.data >= b.data
    return _make(np.where(take_a, a.data, b.data), (a, b),
                 (lambda g: _unbroadcast(g * take_a, a.data.shape),
                  lambda g: _unbroadcast(g * ~take_a, b.data.shape)))


def dropout(a, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; call only on the training path."""
    a = _as_tensor(a)
    if p <= 0.0:
        return a
    keep = rng.random(a.data.shape) >= p
    scale_ = 1.0 / (1.0 - p)
    mask = keep * scale_
    return _make(a.data * mask, (a,), (lambda g: g * mask,))


def rotate_pairs(v, cos: np.ndarray, sin: np.ndarray) -> Tensor:
    """Planar rotation of adjacent coordinate pairs by fixed angles.

    ``v`` has even trailing dimension d; ``cos``/``sin`` broadcast against the
    (..., d/2) halves.  The rotation is orthonormal, so the backward pass is
    the same rotation with the angle negated.
    """
    v = _as_tensor(v)
    even, odd = v.data[..., 0::2], v.data[..., 1::2]
    out = np.empty_like(v.data)
    out[..., 0::2] = even * cos - odd * sin
    out[..., 1::2] = even * sin + odd * cos

    def vjp(g):
        ge, go = g[..., 0::2], g[..., 1::2]
        gv = np.empty_like(v.data)
        gv[..., 0::2] = ge * cos + go * sin
        gv[..., 1::2] = -ge * sin + go * cos
        return gv

    return _make(out, (v,), (vjp,))


def weighted_nll(logits, labels: np.ndarray, label_weights: np.ndarray,
                 normalizer: float) -> Tensor:
    """Label-weighted cross entropy from raw logits, log-sum-exp stabilized.

    ``logits`` is (..., L), ``labels`` an integer array over the leading shape,
    ``label_weights`` a length-L weight vector applied at the gold label.
    Returns sum(w[y] * (logsumexp - logit_y)) / normalizer as a scalar.
    """
    logits = _as_tensor(logits)
    labels = np.asarray(labels)
    w = np.asarray(label_weights, dtype=np.float64)[labels]
    z = logits.data
    zmax = z.max(axis=-1, keepdims=True)
    ez = np.exp(z - zmax)
    sez = ez.sum(axis=-1, keepdims=True)
    lse = np.log(sez[..., 0]) + zmax[..., 0]
    gold = np.take_along_axis(z, labels[..., None], axis=-1)[..., 0]
    value = (w * (lse - gold)).sum() / normalizer

    def vjp(g):
        p = ez / sez
        onehot = np.zeros_like(z)
        np.put_along_axis(onehot, labels[..., None], 1.0, axis=-1)
        return (float(g) / normalizer) * w[..., None] * (p - onehot)

    return _make(value, (logits,), (vjp,))
