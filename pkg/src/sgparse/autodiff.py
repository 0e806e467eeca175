"""Minimal reverse-mode automatic differentiation over numpy arrays.

Just enough ops for an LSTM stack, an MLP and hinge losses: matrix-vector
products, elementwise arithmetic, tanh/sigmoid, concatenation, slicing and
scalar picks.  Everything runs in float64; a Tensor records its parents and
a closure that routes the incoming gradient to them.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "_parents", "_backprop")

    def __init__(self, data, parents=(), backprop=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._backprop = backprop

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape})"


def _acc(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def tensor(data) -> Tensor:
    """A leaf tensor (parameter or constant)."""
    return Tensor(data)


def matvec(w: Tensor, x: Tensor) -> Tensor:
    out = Tensor(w.data @ x.data, parents=(w, x))

    def backprop(g):
        _acc(w, np.outer(g, x.data))
        _acc(x, w.data.T @ g)

    out._backprop = backprop
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data, parents=(a, b))

    def backprop(g):
        _acc(a, g)
        _acc(b, g)

    out._backprop = backprop
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data - b.data, parents=(a, b))

    def backprop(g):
        _acc(a, g)
        _acc(b, -g)

    out._backprop = backprop
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data * b.data, parents=(a, b))

    def backprop(g):
        _acc(a, g * b.data)
        _acc(b, g * a.data)

    out._backprop = backprop
    return out


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    out = Tensor(y, parents=(a,))

    def backprop(g):
        _acc(a, g * (1.0 - y * y))

    out._backprop = backprop
    return out


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    y = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    out = Tensor(y, parents=(a,))

    def backprop(g):
        _acc(a, g * y * (1.0 - y))

    out._backprop = backprop
    return out


def concat(parts: list[Tensor]) -> Tensor:
    out = Tensor(np.concatenate([p.data for p in parts]), parents=tuple(parts))
    offsets = np.cumsum([0] + [p.data.shape[0] for p in parts])

    def backprop(g):
        for p, lo, hi in zip(parts, offsets, offsets[1:]):
            _acc(p, g[lo:hi])

    out._backprop = backprop
    return out


def narrow(a: Tensor, start: int, stop: int) -> Tensor:
    out = Tensor(a.data[start:stop], parents=(a,))

    def backprop(g):
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        a.grad[start:stop] += g

    out._backprop = backprop
    return out


def pick(a: Tensor, index: int) -> Tensor:
    out = Tensor(a.data[index], parents=(a,))

    def backprop(g):
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        a.grad[index] += g

    out._backprop = backprop
    return out


def row(m: Tensor, index: int) -> Tensor:
    """Row lookup into a matrix, accumulating gradient into that row only."""
    out = Tensor(m.data[index], parents=(m,))

    def backprop(g):
        if m.grad is None:
            m.grad = np.zeros_like(m.data)
        m.grad[index] += g

    out._backprop = backprop
    return out


def addsum(parts: list[Tensor]) -> Tensor:
    """Sum of scalar tensors."""
    out = Tensor(sum(float(p.data) for p in parts), parents=tuple(parts))

    def backprop(g):
        for p in parts:
            _acc(p, g)

    out._backprop = backprop
    return out


def backward(root: Tensor) -> None:
    """Backpropagate from a scalar root, accumulating into .grad fields."""
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    root.grad = np.ones_like(root.data)
    for node in reversed(order):
        if node._backprop is not None and node.grad is not None:
            node._backprop(node.grad)
