"""Minimal reverse-mode automatic differentiation over numpy arrays.

A ``Var`` wraps an ndarray and remembers how to push an incoming gradient
back to its parents.  Graphs are built per forward pass (a few hundred
vectorized nodes), so there is no parameter registry and no in-place reuse:
``backward(root)`` walks the graph once and leaves the gradient of every
reachable ``Var`` in ``.grad``.

All ops operate on float64 arrays and are deterministic: reductions use
numpy's fixed left-to-right order and scatter ops use ``np.add.at``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np


class Var:
    __slots__ = ("value", "grad", "parents", "_backward")

    def __init__(self, value, parents=(), backward=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(shape={self.value.shape})"


def as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def _acc(node: Var, g: np.ndarray) -> None:
    node.grad = g if node.grad is None else node.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a gradient back to ``shape`` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, dim in enumerate(shape):
        if dim == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


def add(a, b) -> Var:
    a, b = as_var(a), as_var(b)

    def back(g):
        _acc(a, _unbroadcast(g, a.value.shape))
        _acc(b, _unbroadcast(g, b.value.shape))

    return Var(a.value + b.value, (a, b), back)


def sub(a, b) -> Var:
    a, b = as_var(a), as_var(b)

    def back(g):
        _acc(a, _unbroadcast(g, a.value.shape))
        _acc(b, _unbroadcast(-g, b.value.shape))

    return Var(a.value - b.value, (a, b), back)


def mul(a, b) -> Var:
    a, b = as_var(a), as_var(b)

    def back(g):
        _acc(a, _unbroadcast(g * b.value, a.value.shape))
        _acc(b, _unbroadcast(g * a.value, b.value.shape))

    return Var(a.value * b.value, (a, b), back)


def div(a, b) -> Var:
    a, b = as_var(a), as_var(b)

    def back(g):
        _acc(a, _unbroadcast(g / b.value, a.value.shape))
        _acc(b, _unbroadcast(-g * a.value / (b.value * b.value), b.value.shape))

    return Var(a.value / b.value, (a, b), back)


def neg(a) -> Var:
    a = as_var(a)
    return Var(-a.value, (a,), lambda g: _acc(a, -g))


def exp(a) -> Var:
    a = as_var(a)
    out = np.exp(a.value)
    return Var(out, (a,), lambda g: _acc(a, g * out))


def log(a) -> Var:
    a = as_var(a)
    return Var(np.log(a.value), (a,), lambda g: _acc(a, g / a.value))


def tanh(a) -> Var:
    a = as_var(a)
    out = np.tanh(a.value)
    return Var(out, (a,), lambda g: _acc(a, g * (1.0 - out * out)))


def leaky_relu(a, slope: float) -> Var:
    a = as_var(a)
    pos = a.value >= 0

    def back(g):
        _acc(a, g * np.where(pos, 1.0, slope))

    return Var(np.where(pos, a.value, slope * a.value), (a,), back)


def elu(a, alpha: float) -> Var:
    a = as_var(a)
    pos = a.value >= 0
    out = np.where(pos, a.value, alpha * (np.exp(np.minimum(a.value, 0.0)) - 1.0))

    def back(g):
        # d/dz elu = 1 for z >= 0, elu(z) + alpha below
        _acc(a, g * np.where(pos, 1.0, out + alpha))

    return Var(out, (a,), back)


def clip(a, lo: float, hi: float) -> Var:
    """Clamp values into [lo, hi]; gradient passes only where unclamped."""
    a = as_var(a)
    inside = (a.value >= lo) & (a.value <= hi)

    def back(g):
        _acc(a, g * inside)

    return Var(np.clip(a.value, lo, hi), (a,), back)


def matmul(a, b) -> Var:
    """Matrix product for (m,k)@(k,n), (m,k)@(k,) and (k,)@(k,) operands."""
    a, b = as_var(a), as_var(b)
    out = a.value @ b.value

    def back(g):
        if a.value.ndim == 2 and b.value.ndim == 2:
            _acc(a, g @ b.value.T)
            _acc(b, a.value.T @ g)
        elif a.value.ndim == 2 and b.value.ndim == 1:
            _acc(a, np.outer(g, b.value))
            _acc(b, a.value.T @ g)
        elif a.value.ndim == 1 and b.value.ndim == 1:
            _acc(a, g * b.value)
            _acc(b, g * a.value)
        else:
            raise ValueError(f"unsupported matmul ranks {a.value.ndim}@{b.value.ndim}")

    return Var(out, (a, b), back)


def transpose(a) -> Var:
    a = as_var(a)
    return Var(a.value.T, (a,), lambda g: _acc(a, g.T))


def gather(a, idx: np.ndarray) -> Var:
    """Select rows of ``a`` by integer index (repeats allowed)."""
    a = as_var(a)

    def back(g):
        ga = np.zeros_like(a.value)
        np.add.at(ga, idx, g)
        _acc(a, ga)

    return Var(a.value[idx], (a,), back)


def segment_sum(a, seg: np.ndarray, num: int) -> Var:
    """out[k] = sum of rows of ``a`` whose segment id is k."""
    a = as_var(a)
    out = np.zeros((num,) + a.value.shape[1:], dtype=np.float64)
    np.add.at(out, seg, a.value)
    return Var(out, (a,), lambda g: _acc(a, g[seg]))


def segment_max_const(values: np.ndarray, seg: np.ndarray, num: int) -> np.ndarray:
    """Per-segment max as a detached constant (for stable softmax shifts)."""
    out = np.full(num, -np.inf)
    np.maximum.at(out, seg, values)
    return out


def segment_softmax(logits: Var, seg: np.ndarray, num: int) -> Var:
    """Softmax within each segment, shifted by the per-segment max.

    The shift constant is detached; softmax is shift-invariant, so the
    gradient is exact.
    """
    shift = segment_max_const(logits.value, seg, num)
    e = exp(sub(logits, shift[seg]))
    denom = segment_sum(e, seg, num)
    return div(e, gather(denom, seg))


def slice_vec(a, lo: int, hi: int) -> Var:
    """Contiguous slice of a 1-d vector."""
    a = as_var(a)

    def back(g):
        ga = np.zeros_like(a.value)
        ga[lo:hi] = g
        _acc(a, ga)

    return Var(a.value[lo:hi], (a,), back)


def reshape(a, shape: tuple) -> Var:
    a = as_var(a)
    return Var(a.value.reshape(shape), (a,), lambda g: _acc(a, g.reshape(a.value.shape)))


def concat_cols(parts: Sequence[Var]) -> Var:
    """Concatenate 2-d blocks along axis 1."""
    parts = [as_var(p) for p in parts]
    widths = [p.value.shape[1] for p in parts]
    offsets = np.cumsum([0] + widths)

    def back(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            _acc(p, g[:, lo:hi])

    return Var(np.concatenate([p.value for p in parts], axis=1), tuple(parts), back)


def summation(a, axis=None) -> Var:
    a = as_var(a)

    def back(g):
        if axis is None:
            _acc(a, np.broadcast_to(g, a.value.shape).copy())
        else:
            _acc(a, np.broadcast_to(np.expand_dims(g, axis), a.value.shape).copy())

    return Var(a.value.sum(axis=axis), (a,), back)


def mean(a) -> Var:
    a = as_var(a)
    return mul(summation(a), 1.0 / a.value.size)


def backward(root: Var) -> None:
    """Accumulate d(root)/d(node) into ``.grad`` of every reachable node."""
    if root.value.ndim != 0:
        raise ValueError("backward expects a scalar root")
    order = []
    seen = set()
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
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
