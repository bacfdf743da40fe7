"""Differentiable primitives. Every op takes Tensors (or array-likes) and returns a Tensor."""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from tractrlf.core.errors import ShapeError, UsageError
from tractrlf.diffcore.tensor import Tensor, as_tensor, record

ACOS_EPS = 1e-6


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"cannot broadcast {a.shape} with {b.shape}") from exc


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b)
    return record(
        a.data + b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b)
    return record(
        a.data - b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape))
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b)
    return record(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b)
    return record(
        a.data / b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
    )


def neg(a) -> Tensor:
    a = as_tensor(a)
    return record(-a.data, (a,), lambda g: (-g,))


def matmul(a, b) -> Tensor:
    """Batched matrix product over the last two axes (both operands at least 2-D)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch {a.shape} @ {b.shape}")

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return record(a.data @ b.data, (a, b), backward)


def relu(x) -> Tensor:
    x = as_tensor(x)
    return record(np.maximum(x.data, 0.0), (x,), lambda g: (g * (x.data > 0),))


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return record(y, (x,), lambda g: (g * (1.0 - y * y),))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    y = _sigmoid(x.data)
    return record(y, (x,), lambda g: (g * y * (1.0 - y),))


def log(x) -> Tensor:
    x = as_tensor(x)
    return record(np.log(x.data), (x,), lambda g: (g / x.data,))


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    y = np.sqrt(x.data)
    return record(y, (x,), lambda g: (g / (2.0 * y),))


def acos_clamped(x, eps: float = ACOS_EPS) -> Tensor:
    """acos of x clamped to [-1+eps, 1-eps]; zero gradient outside the clamp."""
    x = as_tensor(x)
    xc = np.clip(x.data, -1.0 + eps, 1.0 - eps)
    inside = (x.data >= -1.0 + eps) & (x.data <= 1.0 - eps)
    return record(np.arccos(xc), (x,), lambda g: (-g * inside / np.sqrt(1.0 - xc * xc),))


def sum(x, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = as_tensor(x)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return record(np.sum(x.data, axis=axis, keepdims=keepdims), (x,), backward)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def softmax_lastdim(x) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)
    return record(s, (x,), lambda g: (s * (g - (g * s).sum(axis=-1, keepdims=True)),))


def _normalize_backward(g_hat, x_hat, inv_std, axis):
    return inv_std * (
        g_hat - g_hat.mean(axis=axis, keepdims=True) - x_hat * (g_hat * x_hat).mean(axis=axis, keepdims=True)
    )


def layernorm_lastdim(x, gamma=None, beta=None, eps: float = 1e-5) -> Tensor:
    x = as_tensor(x)
    gamma = as_tensor(gamma) if gamma is not None else None
    beta = as_tensor(beta) if beta is not None else None
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x.data - mu) * inv_std
    y = x_hat * (gamma.data if gamma is not None else 1.0) + (beta.data if beta is not None else 0.0)
    parents = tuple(p for p in (x, gamma, beta) if p is not None)

    def backward(g):
        g_hat = g * (gamma.data if gamma is not None else 1.0)
        grads = [_normalize_backward(g_hat, x_hat, inv_std, -1)]
        if gamma is not None:
            grads.append(_unbroadcast(g * x_hat, gamma.shape))
        if beta is not None:
            grads.append(_unbroadcast(g, beta.shape))
        return tuple(grads)

    return record(y, parents, backward)


@dataclass
class RunningStats:
    """Batch-norm running statistics; arrays are updated in place."""

    mean: np.ndarray
    var: np.ndarray
    momentum: float = 0.1


def batchnorm_lastdim(x, gamma, beta, stats: RunningStats, training: bool, eps: float = 1e-5) -> Tensor:
    """Normalise each feature (last axis) over the batch axis (axis 0)."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if training:
        n = x.shape[0]
        if n < 2:
            raise UsageError("batch normalisation in train mode needs a batch of at least 2")
        mu = x.data.mean(axis=0, keepdims=True)
        var = x.data.var(axis=0, keepdims=True)
        stats.mean[...] = (1.0 - stats.momentum) * stats.mean + stats.momentum * mu[0]
        stats.var[...] = (1.0 - stats.momentum) * stats.var + stats.momentum * var[0] * n / (n - 1)
    else:
        mu = stats.mean[None, :]
        var = stats.var[None, :]
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x.data - mu) * inv_std

    def backward(g):
        g_hat = g * gamma.data
        if training:
            gx = _normalize_backward(g_hat, x_hat, inv_std, 0)
        else:
            gx = g_hat * inv_std
        return gx, _unbroadcast(g * x_hat, gamma.shape), _unbroadcast(g, beta.shape)

    return record(x_hat * gamma.data + beta.data, (x, gamma, beta), backward)


def dropout(x, p: float, rng: Optional[np.random.Generator], training: bool) -> Tensor:
    if not 0.0 <= p < 1.0:
        raise UsageError(f"dropout probability must be in [0, 1), got {p}")
    x = as_tensor(x)
    if not training or p == 0.0:
        return x
    if rng is None:
        raise UsageError("dropout in train mode needs an explicit rng")
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return record(x.data * keep, (x,), lambda g: (g * keep,))


def concat_lastdim(xs: Sequence) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    widths = np.cumsum([x.shape[-1] for x in xs])[:-1]

    def backward(g):
        return tuple(np.split(g, widths, axis=-1))

    return record(np.concatenate([x.data for x in xs], axis=-1), tuple(xs), backward)


def index(x, key) -> Tensor:
    """Basic or advanced indexing (`x[key]`)."""
    x = as_tensor(x)

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, key, g)
        return (gx,)

    return record(np.array(x.data[key]), (x,), backward)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    return record(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def swapaxes(x, a1: int, a2: int) -> Tensor:
    x = as_tensor(x)
    return record(np.swapaxes(x.data, a1, a2), (x,), lambda g: (np.swapaxes(g, a1, a2),))


def embedding_lookup(table, idx) -> Tensor:
    table = as_tensor(table)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise UsageError(f"embedding index out of range [0, {table.shape[0]})")

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        return (gt,)

    return record(table.data[idx], (table,), backward)


def bce_with_logits(z, y) -> Tensor:
    """Elementwise binary cross entropy of sigmoid(z) against labels y."""
    z = as_tensor(z)
    y = np.asarray(y, dtype=np.float64)
    loss = np.maximum(z.data, 0.0) - z.data * y + np.log1p(np.exp(-np.abs(z.data)))
    return record(loss, (z,), lambda g: (g * (_sigmoid(z.data) - y),))


def linear(x, weight, bias=None) -> Tensor:
    out = matmul(x, weight)
    return add(out, bias) if bias is not None else out


Tensor.__add__ = add
Tensor.__radd__ = lambda self, other: add(other, self)
Tensor.__sub__ = sub
Tensor.__rsub__ = lambda self, other: sub(other, self)
Tensor.__mul__ = mul
Tensor.__rmul__ = lambda self, other: mul(other, self)
Tensor.__truediv__ = div
Tensor.__neg__ = neg
Tensor.__matmul__ = matmul
Tensor.__getitem__ = index
