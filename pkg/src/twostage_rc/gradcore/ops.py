"""Differentiable primitives.

Binary elementwise ops require equal shapes; use :func:`broadcast_to`
explicitly when a bias or a vector has to be repeated. Python scalars are
accepted as constants on either side.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .tensor import (
    DimensionError,
    DomainError,
    EmptySequenceError,
    EmptySupportError,
    ParameterError,
    Tensor,
    make_result,
)

ELEMENTWISE_OPS = ("add", "sub", "mul", "div", "tanh", "sigmoid", "exp", "log")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _is_const(x) -> bool:
    return isinstance(x, (int, float, np.floating, np.integer))


def _check_same(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")


# -- elementwise ---------------------------------------------------------------


def add(a, b) -> Tensor:
    if _is_const(b):
        a = as_tensor(a)
        return make_result(a.data + b, (a,), lambda g: (g,))
    if _is_const(a):
        return add(b, a)
    a, b = as_tensor(a), as_tensor(b)
    _check_same(a, b, "add")
    return make_result(a.data + b.data, (a, b), lambda g: (g, g))


def neg(a: Tensor) -> Tensor:
    return make_result(-a.data, (a,), lambda g: (-g,))


def sub(a, b) -> Tensor:
    if _is_const(b):
        a = as_tensor(a)
        return make_result(a.data - b, (a,), lambda g: (g,))
    if _is_const(a):
        b = as_tensor(b)
        return make_result(a - b.data, (b,), lambda g: (-g,))
    a, b = as_tensor(a), as_tensor(b)
    _check_same(a, b, "sub")
    return make_result(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    if _is_const(b):
        a = as_tensor(a)
        c = float(b)
        return make_result(a.data * c, (a,), lambda g: (g * c,))
    if _is_const(a):
        return mul(b, a)
    a, b = as_tensor(a), as_tensor(b)
    _check_same(a, b, "mul")
    return make_result(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def div(a, b) -> Tensor:
    if _is_const(b):
        return mul(a, 1.0 / float(b))
    if _is_const(a):
        b = as_tensor(b)
        c = float(a)
        out = c / b.data
        return make_result(out, (b,), lambda g: (-g * out / b.data,))
    a, b = as_tensor(a), as_tensor(b)
    _check_same(a, b, "div")
    out = a.data / b.data
    return make_result(out, (a, b), lambda g: (g / b.data, -g * out / b.data))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return make_result(out, (a,), lambda g: (g * (1.0 - out * out),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form cannot overflow for large |x|
    return 0.5 + 0.5 * np.tanh(0.5 * x)


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid(a.data)
    return make_result(out, (a,), lambda g: (g * out * (1.0 - out),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return make_result(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0.0):
        raise DomainError("log of a nonpositive value")
    return make_result(np.log(a.data), (a,), lambda g: (g / a.data,))


_UNARY = {"tanh": tanh, "sigmoid": sigmoid, "exp": exp, "log": log}
_BINARY = {"add": add, "sub": sub, "mul": mul, "div": div}


def elementwise(tag: str, a: Tensor, b: Tensor | None = None) -> Tensor:
    """Dispatch one of ``ELEMENTWISE_OPS`` by name."""
    if tag in _UNARY:
        if b is not None:
            raise ParameterError(f"{tag} takes one operand")
        return _UNARY[tag](a)
    if tag in _BINARY:
        if b is None:
            raise ParameterError(f"{tag} takes two operands")
        return _BINARY[tag](a, b)
    raise ParameterError(f"unknown elementwise op {tag!r}")


# -- linear algebra and shape ----------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul needs 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    return make_result(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise DimensionError(f"transpose needs a 2-d tensor, got {a.shape}")
    return make_result(a.data.T, (a,), lambda g: (g.T,))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    old = a.shape
    return make_result(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def broadcast_to(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    try:
        out = np.broadcast_to(a.data, shape)
    except ValueError as exc:
        raise DimensionError(f"cannot broadcast {a.shape} to {shape}") from exc
    lead = len(shape) - a.ndim
    axes = tuple(range(lead)) + tuple(
        lead + i for i, n in enumerate(a.shape) if n == 1 and shape[lead + i] != 1
    )

    def bw(g):
        return (g.sum(axis=axes, keepdims=True).reshape(a.shape) if axes else g,)

    return make_result(np.ascontiguousarray(out), (a,), bw)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise DimensionError("concat of nothing")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise DimensionError(str(exc)) from exc
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make_result(out, tensors, bw)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise DimensionError("stack of nothing")
    shape = tensors[0].shape
    for t in tensors:
        if t.shape != shape:
            raise DimensionError(f"stack: shapes {shape} and {t.shape} differ")
    out = np.stack([t.data for t in tensors], axis=axis)

    def bw(g):
        return tuple(np.moveaxis(g, axis, 0))

    return make_result(out, tensors, bw)


def getitem(a: Tensor, key) -> Tensor:
    """Basic (slice/int) indexing; gradients scatter back into place."""
    out = a.data[key]
    if isinstance(out, np.ndarray) and np.shares_memory(out, a.data):
        out = out.copy()

    def bw(g):
        full = np.zeros_like(a.data)
        full[key] += g
        return (full,)

    return make_result(np.asarray(out, dtype=np.float64), (a,), bw)


def take(a: Tensor, indices, axis: int = 0) -> Tensor:
    """Gather along ``axis`` with repeated indices allowed (embedding lookup)."""
    idx = np.asarray(indices, dtype=np.int64)
    out = np.take(a.data, idx, axis=axis)

    def bw(g):
        full = np.zeros_like(a.data)
        moved = np.moveaxis(full, axis, 0)
        np.add.at(moved, idx, np.moveaxis(g, axis, 0) if idx.ndim == 1 else g)
        return (full,)

    return make_result(out, (a,), bw)


def flip(a: Tensor, axis: int) -> Tensor:
    return make_result(np.flip(a.data, axis=axis).copy(), (a,), lambda g: (np.flip(g, axis=axis),))


# -- reductions --------------------------------------------------------------------


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = np.sum(a.data, axis=axis, keepdims=keepdims)
    shape = a.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return make_result(np.asarray(out), (a,), bw)


def mean(a: Tensor, axis=None) -> Tensor:
    n = a.size if axis is None else a.shape[axis]
    return mul(sum(a, axis=axis), 1.0 / n)


def max(a: Tensor, axis: int) -> Tensor:  # noqa: A001
    """Maximum along ``axis``; ties send the gradient to the first index."""
    if a.shape[axis] == 0:
        raise EmptySequenceError("max over an empty axis")
    idx = np.argmax(a.data, axis=axis)
    out = np.take_along_axis(a.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis)

    def bw(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
        return (full,)

    return make_result(out, (a,), bw)


def max_pool_time(x: Tensor) -> Tensor:
    """Per-row maximum of a ``[d, L]`` feature-by-time matrix."""
    if x.ndim != 2:
        raise DimensionError(f"max_pool_time needs [d, L], got {x.shape}")
    if x.shape[1] == 0:
        raise EmptySequenceError("max_pool_time over zero time steps")
    return max(x, axis=1)


# -- normalizers -----------------------------------------------------------------------


def _full_mask(mask, shape) -> np.ndarray:
    if mask is None:
        return np.ones(shape, dtype=bool)
    m = np.asarray(mask, dtype=bool)
    if m.shape != shape:
        raise DimensionError(f"mask shape {m.shape} differs from scores {shape}")
    return m


def softmax_masked(scores: Tensor, mask=None, axis: int = -1) -> Tensor:
    """Softmax along ``axis`` restricted to ``mask``; masked entries are exactly 0."""
    m = _full_mask(mask, scores.shape)
    if not np.all(m.any(axis=axis)):
        raise EmptySupportError("softmax over an all-masked row")
    x = np.where(m, scores.data, -np.inf)
    x = x - x.max(axis=axis, keepdims=True)
    e = np.where(m, np.exp(x), 0.0)
    p = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (p * (g - (g * p).sum(axis=axis, keepdims=True)),)

    return make_result(p, (scores,), bw)


def log_softmax_masked(scores: Tensor, mask=None) -> Tensor:
    """Log-softmax over all entries of ``scores`` at once; masked entries are -inf."""
    m = _full_mask(mask, scores.shape)
    if not m.any():
        raise EmptySupportError("log-softmax with empty support")
    x = np.where(m, scores.data, -np.inf)
    top = x.max()
    lse = top + np.log(np.exp(x - top).sum())
    out = x - lse
    p = np.where(m, np.exp(out), 0.0)

    def bw(g):
        g = np.where(m, g, 0.0)
        return (g - p * g.sum(),)

    return make_result(out, (scores,), bw)


def logsumexp(a: Tensor) -> Tensor:
    top = a.data.max()
    e = np.exp(a.data - top)
    s = e.sum()
    return make_result(np.asarray(top + np.log(s)), (a,), lambda g: (g * e / s,))


# -- stochastic ----------------------------------------------------------------------------


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1-rate); identity when not training."""
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return make_result(x.data * keep, (x,), lambda g: (g * keep,))
