"""A small reverse-mode autodiff engine over dense 2-D float64 arrays.

Every operation returns a new :class:`Tensor` that remembers its parents and a
closure propagating the upstream gradient to them. ``backward`` walks the
record in reverse topological order. Sparse adjacency blocks enter only as
constants through :func:`spmm`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ShapeError
from .graph import LayerAdjacency


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 _parents: tuple = (), _backward: Callable | None = None):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got shape {arr.shape}")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def backward(self) -> dict["Tensor", np.ndarray]:
        return backward(self)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    __array_priority__ = 100

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_lift(other)))

    def __rsub__(self, other):
        return add(_lift(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents: tuple, backward_fn) -> Tensor:
    req = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=req, _parents=parents if req else (),
                  _backward=backward_fn if req else None)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if shape[0] == 1 and grad.shape[0] != 1:
        grad = grad.sum(axis=0, keepdims=True)
    if shape[1] == 1 and grad.shape[1] != 1:
        grad = grad.sum(axis=1, keepdims=True)
    return grad


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    t.grad = g.copy() if t.grad is None else t.grad + g


# -- elementwise and linear-algebra ops --------------------------------------

def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    try:
        out = a.data + b.data
    except ValueError as exc:
        raise ShapeError(f"cannot add {a.shape} and {b.shape}") from exc

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
    return _make(out, (a, b), bw)


def neg(a: Tensor) -> Tensor:
    def bw(g):
        return (-g,)
    return _make(-a.data, (a,), bw)


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    try:
        out = a.data * b.data
    except ValueError as exc:
        raise ShapeError(f"cannot multiply {a.shape} and {b.shape}") from exc

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)
    return _make(out, (a, b), bw)


def square(a: Tensor) -> Tensor:
    def bw(g):
        return (2.0 * a.data * g,)
    return _make(a.data ** 2, (a,), bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch {a.shape} @ {b.shape}")

    def bw(g):
        return g @ b.data.T, a.data.T @ g
    return _make(a.data @ b.data, (a, b), bw)


def spmm(adj: LayerAdjacency, h: Tensor) -> Tensor:
    """Aggregate rows of ``h`` (aligned with adj.cols) into adj.rows."""
    if h.shape[0] != adj.shape[1]:
        raise ShapeError(f"spmm: block is {adj.shape} but features have {h.shape[0]} rows")
    m = adj.matrix
    out = np.asarray(m @ h.data).reshape(adj.shape[0], h.shape[1])

    def bw(g):
        return (np.asarray(m.T @ g).reshape(h.shape),)
    return _make(out, (h,), bw)


def relu(t: Tensor) -> Tensor:
    mask = t.data > 0

    def bw(g):
        return (g * mask,)
    return _make(np.where(mask, t.data, 0.0), (t,), bw)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(t: Tensor) -> Tensor:
    s = _sigmoid(t.data)

    def bw(g):
        return (g * s * (1.0 - s),)
    return _make(s, (t,), bw)


def log(t: Tensor) -> Tensor:
    def bw(g):
        return (g / t.data,)
    return _make(np.log(t.data), (t,), bw)


def clip(t: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; gradient is zero where the clamp is active."""
    inside = (t.data >= lo) & (t.data <= hi)

    def bw(g):
        return (g * inside,)
    return _make(np.clip(t.data, lo, hi), (t,), bw)


def total(t: Tensor) -> Tensor:
    """Sum of all entries as a 1x1 tensor."""
    def bw(g):
        return (np.full(t.shape, g[0, 0]),)
    return _make(t.data.sum(), (t,), bw)


def mean(t: Tensor) -> Tensor:
    n = t.data.size

    def bw(g):
        return (np.full(t.shape, g[0, 0] / n),)
    return _make(t.data.mean(), (t,), bw)


def mean_rows(t: Tensor) -> Tensor:
    """Column-wise mean, shape (1, cols)."""
    n = t.shape[0]

    def bw(g):
        return (np.repeat(g / n, n, axis=0),)
    return _make(t.data.mean(axis=0, keepdims=True), (t,), bw)


def take_rows(t: Tensor, idx) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64).reshape(-1)

    def bw(g):
        full = np.zeros_like(t.data)
        np.add.at(full, idx, g)
        return (full,)
    return _make(t.data[idx], (t,), bw)


def hstack(parts: Sequence[Tensor]) -> Tensor:
    parts = [_lift(p) for p in parts]
    widths = np.cumsum([0] + [p.shape[1] for p in parts])

    def bw(g):
        return tuple(g[:, lo:hi] for lo, hi in zip(widths[:-1], widths[1:]))
    return _make(np.hstack([p.data for p in parts]), tuple(parts), bw)


# -- losses -------------------------------------------------------------------

def softmax_cross_entropy(logits: Tensor, class_ids) -> Tensor:
    """Mean of -log softmax(logits)[row, class]."""
    ids = np.asarray(class_ids, dtype=np.int64).reshape(-1)
    n, c = logits.shape
    if len(ids) != n:
        raise ShapeError(f"{len(ids)} class ids for {n} logit rows")
    if n == 0:
        raise ShapeError("cross entropy of an empty batch")
    if ids.min() < 0 or ids.max() >= c:
        raise ShapeError(f"class id outside [0, {c})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    rows = np.arange(n)
    value = -logp[rows, ids].mean()

    def bw(g):
        p = np.exp(logp)
        p[rows, ids] -= 1.0
        return (g[0, 0] * p / n,)
    return _make(value, (logits,), bw)


def binary_cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean BCE over all entries, in the stable max(x,0) - x*y + log(1+e^-|x|) form."""
    y = targets.data if isinstance(targets, Tensor) else np.asarray(targets, dtype=np.float64)
    x = logits.data
    if y.shape != x.shape:
        raise ShapeError(f"BCE targets {y.shape} do not match logits {x.shape}")
    value = np.mean(np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x))))

    def bw(g):
        return (g[0, 0] * (_sigmoid(x) - y) / x.size,)
    return _make(value, (logits,), bw)


# -- reverse pass ---------------------------------------------------------------

def _topo_order(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Accumulate d loss / d t into ``t.grad`` for every requires_grad leaf.

    Gradients add onto whatever is already stored, so call ``zero_grad`` between
    independent passes. Returns a map from leaf tensor to its gradient.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return {}
    upstream = {id(loss): np.ones((1, 1))}
    leaves = []
    for node in reversed(_topo_order(loss)):
        g = upstream.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            _accumulate(node, g)
            leaves.append(node)
            continue
        for p, pg in zip(node._parents, node._backward(g)):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            upstream[key] = pg if key not in upstream else upstream[key] + pg
    return {leaf: leaf.grad for leaf in leaves}


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


# -- optimiser ----------------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray | None], state: AdamState) -> AdamState:
    """In-place bias-corrected Adam update; missing gradients count as zero."""
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ShapeError(f"gradient {g.shape} does not match parameter {p.data.shape}")
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        p.data -= state.lr * (state.m[i] / c1) / (np.sqrt(state.v[i] / c2) + state.eps)
    return state


class Adam:
    """Adam over a fixed parameter list, reading gradients from ``.grad``."""

    def __init__(self, params: Iterable[Tensor], lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.state)
