"""Reverse-mode automatic differentiation over numpy arrays.

Operations record themselves on the innermost active :class:`Tape` when at
least one input requires a gradient. Outside a tape everything runs as plain
numpy, which is the inference path.
"""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

_TAPES: list["Tape"] = []


class Tensor:
    """A float64 array with optional gradient tracking.

    Parameters are tensors created with ``requires_grad=True`` and a name;
    gradients come back from :func:`backward` keyed by that name.
    """

    __slots__ = ("value", "requires_grad", "name")
    __array_priority__ = 100

    def __init__(self, value, requires_grad: bool = False, name: Optional[str] = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def item(self) -> float:
        return float(self.value)

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """Records primitive operations for one backward pass."""

    def __init__(self):
        self.nodes: list[tuple[Tensor, tuple, Callable]] = []

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _TAPES.remove(self)
        return False

    def __len__(self):
        return len(self.nodes)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def active_tape() -> Optional[Tape]:
    return _TAPES[-1] if _TAPES else None


def record(value, inputs: Sequence[Tensor], vjp: Callable) -> Tensor:
    """Wrap ``value`` as an op output and record it if any input is tracked.

    ``vjp(g)`` maps the output cotangent to a tuple of input cotangents
    (``None`` for inputs that need none).
    """
    out = Tensor(value)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.nodes.append((out, tuple(inputs), vjp))
    return out


def backward(tape: Tape, root: Tensor, seed=None, params: Optional[Sequence[Tensor]] = None) -> dict:
    """Accumulate gradients of ``root`` into every tracked leaf.

    Returns ``{name: gradient}`` for ``params`` (or for every named leaf the
    tape touched). Parameters the computation never used get zeros.
    """
    if seed is None:
        if root.value.size != 1:
            raise ValueError("non-scalar root needs an explicit seed gradient")
        seed = np.ones_like(root.value)
    grads = {id(root): np.asarray(seed, dtype=np.float64).reshape(root.shape)}
    leaves: dict[int, Tensor] = {}
    for out, inputs, vjp in reversed(tape.nodes):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for t, gi in zip(inputs, vjp(g)):
            if gi is None or not t.requires_grad:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
            if t.name is not None:
                leaves[key] = t
    if params is None:
        return {t.name: grads[k] for k, t in leaves.items()}
    return {p.name: grads.get(id(p), np.zeros_like(p.value)) for p in params}


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------- primitives

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return record(a.value + b.value, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return record(a.value - b.value, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return record(-a.value, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return record(a.value * b.value, (a, b),
                  lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def vjp(g):
        ga = g @ b.value.T if a.requires_grad else None
        gb = a.value.T @ g if b.requires_grad else None
        return ga, gb

    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return record(a.value @ b.value, (a, b), vjp)


def sigmoid_np(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    y = sigmoid_np(a.value)
    return record(y, (a,), lambda g: (g * y * (1.0 - y),))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.value)
    return record(y, (a,), lambda g: (g * (1.0 - y * y),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.value > 0
    return record(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def square(a) -> Tensor:
    a = as_tensor(a)
    return record(a.value ** 2, (a,), lambda g: (2.0 * a.value * g,))


def total(a) -> Tensor:
    a = as_tensor(a)
    return record(a.value.sum(), (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))


def mean(a) -> Tensor:
    a = as_tensor(a)
    n = a.value.size
    return record(a.value.mean(), (a,), lambda g: (np.full(a.shape, g / n),))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return record(a.value.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))

    return record(np.concatenate([t.value for t in tensors], axis=axis), tensors, vjp)


def take(a, indices, axis: int = 0) -> Tensor:
    """Gather slices of ``a`` along ``axis``; repeated indices accumulate gradients."""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.intp)

    if axis != 0 and idx.ndim != 1:
        raise ValueError("multi-dimensional indices only supported along axis 0")

    def vjp(g):
        ga = np.zeros_like(a.value)
        if axis == 0:
            np.add.at(ga, idx, g)
        else:
            np.add.at(np.moveaxis(ga, axis, 0), idx, np.moveaxis(g, axis, 0))
        return (ga,)

    return record(np.take(a.value, idx, axis=axis), (a,), vjp)
