"""Dense float64 tensors with reverse-mode automatic differentiation.

Every value flowing through the models lives in a `Tensor`: a flat row-major
float64 array plus an optional gradient accumulator. Operations record a tape
of parent links and backward closures; `backward()` replays the tape in
reverse topological order, which is deterministic for a deterministic forward
pass. Gradient recording can be suspended with the `no_grad()` context
manager (used for inference and finite-difference probes).
"""

from __future__ import annotations

import math
import threading
from contextlib import contextmanager

import numpy as np

from .errors import ShapeError


class _GradMode(threading.local):
    # per-thread so concurrent no_grad evaluation cannot leak into training
    enabled = True


_MODE = _GradMode()

_GELU_K = math.sqrt(2.0 / math.pi)
_GELU_C = 0.044715


@contextmanager
def no_grad():
    """Disable tape recording inside the block (current thread only)."""
    prev = _MODE.enabled
    _MODE.enabled = False
    try:
        yield
    finally:
        _MODE.enabled = prev


def grad_enabled():
    return _MODE.enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar; the free functions carry the semantics
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self):
        """Accumulate gradients of self w.r.t. every tape ancestor.

        The seed gradient is all-ones (callers differentiate scalars). Closures
        run in reverse topological order of the recorded tape; the tape is
        released afterwards.
        """
        order = _toposort(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
            node._parents = ()
            node._backward = None


def _toposort(root):
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in reversed(node._parents):
            stack.append((parent, False))
    return order


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _from_op(data, parents, backward):
    out = Tensor(data)
    if _MODE.enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _accum(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g, shape):
    """Sum a broadcast gradient back down to `shape`."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(a_shape, b_shape, opname):
    try:
        np.broadcast_shapes(a_shape, b_shape)
    except ValueError:
        raise ShapeError(f"{opname}: shapes {a_shape} and {b_shape} do not broadcast") from None


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.shape, b.shape, "add")

    def backward(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _from_op(a.data + b.data, (a, b), backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.shape, b.shape, "sub")

    def backward(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))

    return _from_op(a.data - b.data, (a, b), backward)


def neg(a):
    a = as_tensor(a)

    def backward(g):
        _accum(a, -g)

    return _from_op(-a.data, (a,), backward)


def mul(a, b):
    """Elementwise product with numpy broadcasting.

    Covers scalar scaling and row-wise scaling of an (N, C) matrix by a (C,)
    vector; gradients are summed back over broadcast axes.
    """
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.shape, b.shape, "mul")

    def backward(g):
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))

    return _from_op(a.data * b.data, (a, b), backward)


def matmul(a, b):
    """Matrix product for rank-2 or rank-3 operands.

    A rank-3 operand is a stack of matrices; a rank-2 operand broadcasts over
    the stacked leading dimension of the other side.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim not in (2, 3) or b.ndim not in (2, 3):
        raise ShapeError(f"matmul: operands must be rank 2 or 3, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions disagree for {a.shape} @ {b.shape}")
    if a.ndim == 3 and b.ndim == 3 and a.shape[0] != b.shape[0]:
        raise ShapeError(f"matmul: leading dimensions disagree for {a.shape} @ {b.shape}")

    def backward(g):
        _accum(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        _accum(b, _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return _from_op(a.data @ b.data, (a, b), backward)


def transpose(a, axes=None):
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        _accum(a, g.transpose(inverse))

    return _from_op(a.data.transpose(axes), (a,), backward)


def reshape(a, shape):
    a = as_tensor(a)

    def backward(g):
        _accum(a, g.reshape(a.shape))

    return _from_op(a.data.reshape(shape), (a,), backward)


def flatten(a):
    return reshape(a, (-1,))


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: need at least one tensor")
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeError(f"concat: {e}") from None
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accum(t, g[tuple(sl)])

    return _from_op(data, tuple(tensors), backward)


def split(a, sizes, axis=0):
    """Partition along `axis` into consecutive pieces of the given sizes.

    Exact inverse of `concat`: slices are copied bit-for-bit.
    """
    a = as_tensor(a)
    if sum(sizes) != a.shape[axis]:
        raise ShapeError(f"split: sizes {list(sizes)} do not sum to extent {a.shape[axis]} of {a.shape}")
    pieces = []
    lo = 0
    for n in sizes:
        sl = [slice(None)] * a.ndim
        sl[axis] = slice(lo, lo + n)
        sl = tuple(sl)
        lo += n

        def backward(g, sl=sl):
            if a.requires_grad:
                if a.grad is None:
                    a.grad = np.zeros_like(a.data)
                a.grad[sl] += g

        pieces.append(_from_op(a.data[sl].copy(), (a,), backward))
    return pieces


def sum_(a, axis=None, keepdims=False):
    a = as_tensor(a)

    def backward(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, a.shape).copy())
        else:
            ge = g if keepdims else np.expand_dims(g, axis)
            _accum(a, np.broadcast_to(ge, a.shape).copy())

    return _from_op(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    count = a.size if axis is None else a.shape[axis]

    def backward(g):
        if axis is None:
            _accum(a, np.broadcast_to(g / count, a.shape).copy())
        else:
            ge = g if keepdims else np.expand_dims(g, axis)
            _accum(a, np.broadcast_to(ge / count, a.shape).copy())

    return _from_op(a.data.mean(axis=axis, keepdims=keepdims), (a,), backward)


def softmax(a, axis=-1):
    """Max-shifted softmax; outputs are positive and sum to one along `axis`."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * s).sum(axis=axis, keepdims=True)
        _accum(a, s * (g - inner))

    return _from_op(s, (a,), backward)


def gelu(a):
    """Gaussian error linear unit, tanh approximation (fixed for reproducibility)."""
    a = as_tensor(a)
    x = a.data
    u = _GELU_K * (x + _GELU_C * x ** 3)
    t = np.tanh(u)
    y = 0.5 * x * (1.0 + t)

    def backward(g):
        du = _GELU_K * (1.0 + 3.0 * _GELU_C * x ** 2)
        _accum(a, g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t ** 2) * du))

    return _from_op(y, (a,), backward)


def layer_norm(a, gamma, beta, eps=1e-5):
    """Normalize the last axis to zero mean / unit variance, then scale-shift.

    Population variance. A row with exactly zero variance (and eps == 0) maps
    to `beta`: the normalized part is defined as zero rather than NaN.
    """
    a, gamma, beta = as_tensor(a), as_tensor(gamma), as_tensor(beta)
    width = a.shape[-1]
    if gamma.shape != (width,) or beta.shape != (width,):
        raise ShapeError(
            f"layer_norm: gamma {gamma.shape} / beta {beta.shape} must match last-axis extent {width}"
        )
    mu = a.data.mean(axis=-1, keepdims=True)
    xc = a.data - mu
    var = (xc ** 2).mean(axis=-1, keepdims=True)
    denom = np.sqrt(var + eps)
    inv = np.where(denom == 0.0, 0.0, 1.0 / np.where(denom == 0.0, 1.0, denom))
    xhat = xc * inv
    y = gamma.data * xhat + beta.data

    def backward(g):
        dxhat = g * gamma.data
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        _accum(a, dx)
        lead = tuple(range(a.ndim - 1))
        _accum(gamma, (g * xhat).sum(axis=lead))
        _accum(beta, g.sum(axis=lead))

    return _from_op(y, (a, gamma, beta), backward)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_with_logits(logits, labels):
    """Mean binary cross-entropy from raw logits, in the log-sum-exp form.

    `labels` is a constant array of {0, 1}; per-sample losses are averaged.
    """
    logits = as_tensor(logits)
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != logits.shape:
        raise ShapeError(f"bce_with_logits: labels {y.shape} must match logits {logits.shape}")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ShapeError("bce_with_logits: labels must be 0 or 1")
    z = logits.data
    per = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    n = max(per.size, 1)

    def backward(g):
        _accum(logits, g * (_sigmoid(z) - y) / n)

    return _from_op(per.mean(), (logits,), backward)


def sigmoid_value(z):
    """Plain numpy sigmoid for scoring outside the tape."""
    return _sigmoid(np.asarray(z, dtype=np.float64))
