"""Reverse-mode automatic differentiation over dense float64 tensors.

Ops execute eagerly on numpy arrays. While a Graph is active (entered as a
context manager) every op whose inputs require gradients appends a backward
rule to that graph; Graph.backward seeds the loss gradient with 1 and replays
the rules in exact reverse execution order. With no active graph, ops are
plain forward arithmetic, which is all inference needs.

A fresh Graph is meant to be built per training step; graphs are never reused
across steps.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import (
    InternalError,
    NumericError,
    ParameterError,
    ShapeError,
    UsageError,
)

Array = np.ndarray

# Floor for log arguments inside the cross-entropy.
LOG_FLOOR = 1e-12

_GRAPH_STACK: list["Graph"] = []


class Tensor:
    """Dense float64 array with a same-shape gradient buffer.

    The gradient buffer is allocated as zeros at construction and stays
    zero until a backward pass accumulates into it.
    """

    __slots__ = ("data", "grad", "requires_grad", "graph")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.grad = np.zeros_like(self.data)
        self.requires_grad = requires_grad
        self.graph: Graph | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __repr__(self) -> str:
        return f"Tensor(shape={list(self.shape)}, requires_grad={self.requires_grad})"


def parameter(data) -> Tensor:
    """A trainable leaf tensor."""
    return Tensor(data, requires_grad=True)


# A backward rule maps the output gradient to one gradient per input
# (None for inputs that need no gradient).
BackwardRule = Callable[[Array], tuple]


class Graph:
    """Ordered record of executed operations; the unit of one backward pass."""

    def __init__(self) -> None:
        self._records: list[tuple[Tensor, tuple[Tensor, ...], BackwardRule]] = []

    def __enter__(self) -> "Graph":
        _GRAPH_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        _GRAPH_STACK.pop()
        return False

    def __len__(self) -> int:
        return len(self._records)

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/dT into .grad of every requires_grad tensor."""
        if loss.data.size != 1:
            raise UsageError(f"backward needs a scalar loss, got shape {list(loss.shape)}")
        loss.grad[...] = 1.0
        for out, inputs, rule in reversed(self._records):
            grads = rule(out.grad)
            for tensor, grad in zip(inputs, grads):
                if grad is not None and tensor.requires_grad:
                    tensor.grad += grad


def backward(loss: Tensor) -> None:
    """Run the backward pass of the graph that recorded `loss`."""
    if loss.graph is None:
        raise UsageError("loss was not produced by recorded operations")
    loss.graph.backward(loss)


def _apply(inputs: Sequence[Tensor], value: Array, rule: BackwardRule) -> Tensor:
    out = Tensor(value)
    graph = _GRAPH_STACK[-1] if _GRAPH_STACK else None
    if graph is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.graph = graph
        graph._records.append((out, tuple(inputs), rule))
    return out


def _require_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {list(a.shape)} and {list(b.shape)} differ")


# ---------------------------------------------------------------------------
# primitive ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {list(a.shape)} and {list(b.shape)} do not chain")
    value = a.data @ b.data

    def rule(g: Array) -> tuple:
        return g @ b.data.T, a.data.T @ g

    return _apply((a, b), value, rule)


def add(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape("add", a, b)

    def rule(g: Array) -> tuple:
        return g, g

    return _apply((a, b), a.data + b.data, rule)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape("mul", a, b)

    def rule(g: Array) -> tuple:
        return g * b.data, g * a.data

    return _apply((a, b), a.data * b.data, rule)


def tanh(x: Tensor) -> Tensor:
    value = np.tanh(x.data)

    def rule(g: Array) -> tuple:
        return (g * (1.0 - value * value),)

    return _apply((x,), value, rule)


def _stable_sigmoid(x: Array) -> Array:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x: Tensor) -> Tensor:
    value = _stable_sigmoid(x.data)

    def rule(g: Array) -> tuple:
        return (g * value * (1.0 - value),)

    return _apply((x,), value, rule)


def concat(a: Tensor, b: Tensor) -> Tensor:
    """Join two vectors, or two matrices along the feature axis."""
    if a.data.ndim != b.data.ndim:
        raise ShapeError(f"concat: rank {a.data.ndim} vs rank {b.data.ndim}")
    if a.data.ndim == 1:
        split = a.shape[0]

        def rule(g: Array) -> tuple:
            return g[:split], g[split:]

        return _apply((a, b), np.concatenate([a.data, b.data]), rule)
    if a.data.ndim == 2:
        if a.shape[0] != b.shape[0]:
            raise ShapeError(f"concat: row counts {a.shape[0]} and {b.shape[0]} differ")
        split = a.shape[1]

        def rule(g: Array) -> tuple:
            return g[:, :split], g[:, split:]

        return _apply((a, b), np.concatenate([a.data, b.data], axis=1), rule)
    raise ShapeError(f"concat: rank {a.data.ndim} not supported")


def grad_reverse(x: Tensor, strength: float) -> Tensor:
    """Identity in the forward pass; backward multiplies the gradient by -strength."""
    if strength < 0:
        raise ParameterError(f"grad_reverse: strength must be >= 0, got {strength}")
    s = float(strength)

    def rule(g: Array) -> tuple:
        return (-s * g,)

    return _apply((x,), x.data.copy(), rule)


def softmax_cross_entropy(logits: Tensor, label: int) -> Tensor:
    """-log softmax(logits)[label], computed with max subtraction."""
    if logits.data.ndim != 1 or logits.data.size < 2:
        raise ParameterError(f"softmax_cross_entropy: need a class vector, got shape {list(logits.shape)}")
    if not np.all(np.isfinite(logits.data)):
        raise NumericError("softmax_cross_entropy: non-finite logits")
    n_classes = logits.data.size
    if not 0 <= label < n_classes:
        raise ParameterError(f"softmax_cross_entropy: label {label} out of range [0, {n_classes})")
    shifted = logits.data - logits.data.max()
    exps = np.exp(shifted)
    probs = exps / exps.sum()
    value = -np.log(max(probs[label], LOG_FLOOR))

    def rule(g: Array) -> tuple:
        d = probs.copy()
        d[label] -= 1.0
        return (d * g,)

    return _apply((logits,), np.asarray(value), rule)


def sum_all(x: Tensor) -> Tensor:
    """Sum of all entries, as a scalar tensor."""

    def rule(g: Array) -> tuple:
        return (np.full_like(x.data, g.item()),)

    return _apply((x,), np.asarray(x.data.sum()), rule)


def scale(x: Tensor, factor: float) -> Tensor:
    """Multiply by a python constant (no gradient into the constant)."""
    f = float(factor)

    def rule(g: Array) -> tuple:
        return (g * f,)

    return _apply((x,), x.data * f, rule)


def add_rowvec(x: Tensor, v: Tensor) -> Tensor:
    """Add a vector to every row of a matrix (bias broadcast)."""
    if x.data.ndim != 2 or v.data.ndim != 1 or x.shape[1] != v.shape[0]:
        raise ShapeError(f"add_rowvec: shapes {list(x.shape)} and {list(v.shape)} incompatible")

    def rule(g: Array) -> tuple:
        return g, g.sum(axis=0)

    return _apply((x, v), x.data + v.data, rule)


def scale_rows(x: Tensor, column: Array) -> Tensor:
    """Multiply each matrix row by a fixed scalar; no gradient into the scalars.

    Used to freeze recurrent state on padded positions.
    """
    col = np.asarray(column, dtype=np.float64).reshape(-1, 1)
    if x.data.ndim != 2 or col.shape[0] != x.shape[0]:
        raise ShapeError(f"scale_rows: shapes {list(x.shape)} and {list(col.shape)} incompatible")

    def rule(g: Array) -> tuple:
        return (g * col,)

    return _apply((x,), x.data * col, rule)


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous column slice of a matrix."""
    if x.data.ndim != 2:
        raise ShapeError(f"slice_cols: need a matrix, got shape {list(x.shape)}")
    if not 0 <= start <= stop <= x.shape[1]:
        raise ParameterError(f"slice_cols: bad range [{start}, {stop}) for {x.shape[1]} columns")

    def rule(g: Array) -> tuple:
        full = np.zeros_like(x.data)
        full[:, start:stop] = g
        return (full,)

    return _apply((x,), x.data[:, start:stop].copy(), rule)


def take_row(x: Tensor, index: int) -> Tensor:
    """Extract one matrix row as a vector."""
    if x.data.ndim != 2:
        raise ShapeError(f"take_row: need a matrix, got shape {list(x.shape)}")
    if not 0 <= index < x.shape[0]:
        raise ParameterError(f"take_row: row {index} out of range [0, {x.shape[0]})")

    def rule(g: Array) -> tuple:
        full = np.zeros_like(x.data)
        full[index] = g
        return (full,)

    return _apply((x,), x.data[index].copy(), rule)


# ---------------------------------------------------------------------------
# optimizer


class AdamState:
    """Adam moment buffers plus hyperparameters for a fixed parameter set."""

    def __init__(
        self,
        params: Sequence[Tensor],
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ):
        if learning_rate < 0:
            raise ParameterError(f"learning rate must be >= 0, got {learning_rate}")
        if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
            raise ParameterError("betas must be in [0, 1)")
        self.params = list(params)
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.step_count = 0
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon


def adam_step(params: Sequence[Tensor], state: AdamState) -> None:
    """One bias-corrected Adam update; gradients are zeroed afterwards."""
    params = list(params)
    if len(params) != len(state.params) or any(a is not b for a, b in zip(params, state.params)):
        raise InternalError("adam_step: parameters do not match the optimizer state")
    state.step_count += 1
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1**state.step_count
    bias2 = 1.0 - b2**state.step_count
    lr = state.learning_rate
    for p, m, v in zip(state.params, state.m, state.v):
        g = p.grad
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= lr * (m / bias1) / (np.sqrt(v / bias2) + state.epsilon)
        p.grad[...] = 0.0
