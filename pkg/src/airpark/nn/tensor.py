"""Dense float64 tensors with reverse-mode differentiation.

Every op result records its parents and a closure mapping the upstream
gradient to one gradient per parent. Nodes carry a creation sequence
number, so sorting the reachable nodes by it yields a valid reverse
topological order for the single backward sweep.
"""
from __future__ import annotations

import itertools

import numpy as np

_seq = itertools.count()


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "parents", "backward_fn", "seq", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self.parents: tuple = ()
        self.backward_fn = None
        self.seq = next(_seq)
        self.name = name

    # shape helpers
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def backward(self):
        backward(self)


class Parameter(Tensor):
    """Trainable leaf; ``grad`` always has the value's shape."""

    __slots__ = ()

    def __init__(self, data, name: str | None = None):
        super().__init__(np.array(data, dtype=np.float64, copy=True), requires_grad=True, name=name)
        self.grad = np.zeros_like(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_node(data, parents, backward_fn) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = tuple(parents)
        out.backward_fn = backward_fn
    return out


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf."""
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    nodes, stack, seen = [], [loss], {id(loss)}
    while stack:
        node = stack.pop()
        nodes.append(node)
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                seen.add(id(p))
                stack.append(p)
    nodes.sort(key=lambda n: n.seq, reverse=True)
    grads = {id(loss): np.ones_like(loss.data)}
    for node in nodes:
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.backward_fn is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# -- elementwise and structural ops ------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_node(a.data + b.data, (a, b),
                     lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def neg(a) -> Tensor:
    return make_node(-a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_node(a.data * b.data, (a, b),
                     lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def matmul(a, b) -> Tensor:
    """(..., m, k) @ (k, n); the right operand is a plain matrix."""
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def bw(g):
        ga = g @ b.data.T
        a2 = a.data.reshape(-1, a.shape[-1])
        gb = a2.T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return make_node(a.data @ b.data, (a, b), bw)


def relu(a) -> Tensor:
    mask = a.data > 0
    _trace("relu", mask)
    return make_node(np.maximum(a.data, 0.0), (a,), lambda g: (g * mask,))


def sigmoid(a) -> Tensor:
    s = _sigmoid(a.data)
    return make_node(s, (a,), lambda g: (g * s * (1.0 - s),))


def tanh(a) -> Tensor:
    t = np.tanh(a.data)
    return make_node(t, (a,), lambda g: (g * (1.0 - t * t),))


def reshape(a, shape) -> Tensor:
    old = a.shape
    return make_node(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a, axes) -> Tensor:
    inv = np.argsort(axes)
    return make_node(np.ascontiguousarray(a.data.transpose(axes)), (a,), lambda g: (g.transpose(inv),))


def getitem(a, idx) -> Tensor:
    def bw(g):
        out = np.zeros_like(a.data)
        out[idx] = g
        return (out,)

    return make_node(a.data[idx], (a,), bw)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]
    return make_node(np.concatenate([t.data for t in tensors], axis=axis), tensors,
                     lambda g: tuple(np.split(g, cuts, axis=axis)))


def tsum(a, axis=None) -> Tensor:
    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return make_node(a.data.sum(axis=axis), (a,), bw)


def mean(a, axis=None) -> Tensor:
    n = a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(tsum(a, axis), 1.0 / n)


def _sigmoid(x):
    # split by sign to avoid exp overflow
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# -- activation-pattern tracing (used by the gradient checker) -------------

_TRACE: list | None = None


def _trace(kind: str, pattern: np.ndarray) -> None:
    if _TRACE is not None:
        _TRACE.append((kind, np.packbits(pattern.ravel()).tobytes() if pattern.dtype == bool
                       else pattern.tobytes()))


class trace_patterns:
    """Context manager recording relu masks and pooling argmaxes."""

    def __enter__(self):
        global _TRACE
        self._prev = _TRACE
        _TRACE = []
        self.patterns = _TRACE
        return self

    def __exit__(self, *exc):
        global _TRACE
        _TRACE = self._prev
        return False
