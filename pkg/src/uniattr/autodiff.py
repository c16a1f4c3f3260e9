"""Tape-based reverse-mode automatic differentiation over float64 numpy arrays.

A :class:`Tape` records every operation applied to its :class:`Var` objects.
Node ids increase monotonically, so parents always precede children and the
backward sweep is a single pass over the node list in reverse. A tape may be
swept once; build a new one for every forward/backward pair.

    >>> tape = Tape()
    >>> x = tape.leaf([1.0, 2.0])
    >>> y = sum_(x * x)
    >>> tape.backward(y)
    >>> x.grad
    array([2., 4.])
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

OP_KINDS = (
    "leaf",
    "add",
    "mul",
    "matmul",
    "conv2d",
    "relu",
    "exp",
    "log",
    "sum",
    "softmax-logsumexp",
    "gaussian-rbf",
    # structural ops needed by the model zoo
    "reshape",
    "meanpool2d",
    "take",
)


class TapeError(RuntimeError):
    pass


@dataclass
class TapeNode:
    id: int
    kind: str
    parents: tuple[int, ...]
    backward: Callable[[np.ndarray], tuple] | None


class Var:
    """A value recorded on a tape."""

    __array_priority__ = 100

    def __init__(self, tape: Tape, node_id: int, value: np.ndarray, requires_grad: bool):
        self.tape = tape
        self.id = node_id
        self.value = value
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Var(id={self.id}, shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(other) if isinstance(other, Var) else -np.asarray(other, dtype=np.float64))

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    def __init__(self):
        self.nodes: list[TapeNode] = []
        self.vars: list[Var] = []
        self._swept = False

    def leaf(self, value, requires_grad: bool = True) -> Var:
        arr = np.array(value, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise FloatingPointError("leaf: non-finite input value")
        return self._push("leaf", arr, (), None, requires_grad)

    def const(self, value) -> Var:
        return self.leaf(value, requires_grad=False)

    def _push(self, kind, value, parents, backward, requires_grad=None) -> Var:
        if self._swept:
            raise TapeError("tape already swept; record a new tape")
        if kind != "leaf" and not np.all(np.isfinite(value)):
            raise FloatingPointError(f"{kind}: produced non-finite values")
        if requires_grad is None:
            requires_grad = any(self.vars[p].requires_grad for p in parents)
        node = TapeNode(len(self.nodes), kind, tuple(parents), backward)
        var = Var(self, node.id, value, requires_grad)
        self.nodes.append(node)
        self.vars.append(var)
        return var

    def backward(self, out: Var, seed=None) -> None:
        """Accumulate d(out)/d(var) into ``var.grad`` for every var on the tape.

        ``seed`` defaults to ones, so a non-scalar ``out`` is treated as
        ``sum(out)``.
        """
        if out.tape is not self:
            raise TapeError("output belongs to a different tape")
        if self._swept:
            raise TapeError("tape already swept; record a new tape")
        self._swept = True
        grads: list[np.ndarray | None] = [None] * len(self.nodes)
        grads[out.id] = np.ones_like(out.value) if seed is None else np.asarray(seed, dtype=np.float64)
        for node in reversed(self.nodes[: out.id + 1]):
            g = grads[node.id]
            var = self.vars[node.id]
            if g is None or not var.requires_grad:
                continue
            var.grad = g
            if node.backward is None:
                continue
            parent_grads = node.backward(g)
            for pid, pg in zip(node.parents, parent_grads):
                if pg is None or not self.vars[pid].requires_grad:
                    continue
                grads[pid] = pg if grads[pid] is None else grads[pid] + pg
        for var in self.vars:
            if var.requires_grad and var.grad is None:
                var.grad = np.zeros_like(var.value)


def _as_var(tape: Tape, x) -> Var:
    if isinstance(x, Var):
        if x.tape is not tape:
            raise TapeError("operands recorded on different tapes")
        return x
    return tape.const(x)


def _tape_of(*xs) -> Tape:
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    raise TapeError("no Var operand")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_broadcast(kind, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{kind}: cannot broadcast shapes {a.shape} and {b.shape}") from None


def add(a, b) -> Var:
    tape = _tape_of(a, b)
    a, b = _as_var(tape, a), _as_var(tape, b)
    _check_broadcast("add", a, b)
    sa, sb = a.shape, b.shape
    return tape._push(
        "add", a.value + b.value, (a.id, b.id),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)),
    )


def mul(a, b) -> Var:
    tape = _tape_of(a, b)
    a, b = _as_var(tape, a), _as_var(tape, b)
    _check_broadcast("mul", a, b)
    av, bv = a.value, b.value
    return tape._push(
        "mul", av * bv, (a.id, b.id),
        lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
    )


def neg(a) -> Var:
    return mul(a, -1.0)


def matmul(a, b) -> Var:
    tape = _tape_of(a, b)
    a, b = _as_var(tape, a), _as_var(tape, b)
    av, bv = a.value, b.value
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
        raise ValueError(f"matmul: incompatible shapes {av.shape} @ {bv.shape}")
    return tape._push("matmul", av @ bv, (a.id, b.id), lambda g: (g @ bv.T, av.T @ g))


def relu(a: Var) -> Var:
    mask = a.value > 0
    return a.tape._push("relu", np.where(mask, a.value, 0.0), (a.id,), lambda g: (g * mask,))


def exp(a: Var) -> Var:
    with np.errstate(over="ignore"):  # overflow is reported by the finiteness check
        out = np.exp(a.value)
    return a.tape._push("exp", out, (a.id,), lambda g: (g * out,))


def log(a: Var) -> Var:
    av = a.value
    if np.any(av <= 0):
        raise FloatingPointError(f"log: non-positive input (min {av.min():.3g})")
    return a.tape._push("log", np.log(av), (a.id,), lambda g: (g / av,))


def sum_(a: Var, axis=None, keepdims: bool = False) -> Var:
    shape = a.shape
    out = a.value.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return a.tape._push("sum", np.asarray(out, dtype=np.float64), (a.id,), back)


def log_softmax(z: Var) -> Var:
    """Row-wise log-softmax over the last axis, shifted by the row max."""
    zv = z.value
    top = zv.argmax(axis=-1)[..., None]
    shifted = zv - np.take_along_axis(zv, top, axis=-1)
    e = np.exp(shifted)
    np.put_along_axis(e, top, 0.0, axis=-1)
    # log1p of the non-max mass keeps 1 - p accurate for confident rows
    lse = np.log1p(e.sum(axis=-1, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)
    one_minus = -np.expm1(out)
    big = probs > 0.5

    def back(g):
        s = g.sum(axis=-1, keepdims=True)
        return (np.where(big, g - s + one_minus * s, g - probs * s),)

    return z.tape._push("softmax-logsumexp", out, (z.id,), back)


def softmax(z: Var) -> Var:
    return exp(log_softmax(z))


def gaussian_rbf(x: Var, means: Var, sigma: float) -> Var:
    """exp(-||x_n - m_k||^2 / (2 sigma^2)) for x of shape (N, D), means (K, D)."""
    tape = _tape_of(x, means)
    x, means = _as_var(tape, x), _as_var(tape, means)
    if x.value.ndim != 2 or means.value.ndim != 2 or x.shape[1] != means.shape[1]:
        raise ValueError(f"gaussian-rbf: incompatible shapes {x.shape} and {means.shape}")
    diff = x.value[:, None, :] - means.value[None, :, :]
    out = np.exp(-(diff**2).sum(-1) / (2.0 * sigma**2))

    def back(g):
        # d out / d x = -out * diff / sigma^2
        w = (g * out)[:, :, None] * diff / sigma**2
        return (-w.sum(axis=1), w.sum(axis=0))

    return tape._push("gaussian-rbf", out, (x.id, means.id), back)


def reshape(a: Var, shape) -> Var:
    old = a.shape
    try:
        out = a.value.reshape(shape)
    except ValueError:
        raise ValueError(f"reshape: cannot reshape {old} to {tuple(shape)}") from None
    return a.tape._push("reshape", out, (a.id,), lambda g: (g.reshape(old),))


def take(a: Var, index: int, axis: int = -1) -> Var:
    """Select one slice along ``axis`` (drops the axis)."""
    shape = a.shape
    if not -shape[axis] <= index < shape[axis]:
        raise IndexError(f"take: index {index} out of range for axis of size {shape[axis]}")

    def back(g):
        full = np.zeros(shape)
        sl = [slice(None)] * len(shape)
        sl[axis] = index
        full[tuple(sl)] = g
        return (full,)

    return a.tape._push("take", np.take(a.value, index, axis=axis), (a.id,), back)


def conv2d(x: Var, w: Var, b: Var | None = None, padding: int = 1) -> Var:
    """Stride-1 2-D cross-correlation. x: (N, C, H, W); w: (O, C, k, k); b: (O,)."""
    tape = _tape_of(x, w)
    x, w = _as_var(tape, x), _as_var(tape, w)
    xv, wv = x.value, w.value
    if xv.ndim != 4 or wv.ndim != 4 or xv.shape[1] != wv.shape[1] or wv.shape[2] != wv.shape[3]:
        raise ValueError(f"conv2d: incompatible input {xv.shape} and kernel {wv.shape}")
    k = wv.shape[2]
    p = padding
    xp = np.pad(xv, ((0, 0), (0, 0), (p, p), (p, p)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))  # (N, C, H', W', k, k)
    out = np.tensordot(win, wv, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    parents = [x.id, w.id]
    if b is not None:
        b = _as_var(tape, b)
        out = out + b.value[None, :, None, None]
        parents.append(b.id)

    def back(g):
        gw = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))
        q = k - 1 - p
        gp = np.pad(g, ((0, 0), (0, 0), (q, q), (q, q)))
        gwin = sliding_window_view(gp, (k, k), axis=(2, 3))
        gx = np.tensordot(gwin, wv[:, :, ::-1, ::-1], axes=([1, 4, 5], [0, 2, 3])).transpose(0, 3, 1, 2)
        grads = [gx, gw]
        if b is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    return tape._push("conv2d", np.ascontiguousarray(out), tuple(parents), back)


def meanpool2d(x: Var, size: int = 2) -> Var:
    n, c, h, w = x.shape
    if h % size or w % size:
        raise ValueError(f"meanpool2d: spatial shape {(h, w)} not divisible by {size}")
    out = x.value.reshape(n, c, h // size, size, w // size, size).mean(axis=(3, 5))

    def back(g):
        return (np.repeat(np.repeat(g, size, axis=2), size, axis=3) / size**2,)

    return x.tape._push("meanpool2d", out, (x.id,), back)


# --------------------------------------------------------------------------
# entry points


def forward(builder: Callable[..., Var], inputs: Sequence) -> np.ndarray:
    """Evaluate ``builder(*leaf_vars)`` on a fresh tape and return the value."""
    tape = Tape()
    leaves = [tape.leaf(v, requires_grad=False) for v in inputs]
    return tape.vars[builder(*leaves).id].value.copy()


def value_and_grad(builder: Callable[..., Var], inputs: Sequence, wrt: Sequence[int] = (0,)):
    """Run ``builder`` and differentiate the sum of its output w.r.t. ``inputs[i]`` for i in wrt."""
    tape = Tape()
    leaves = [tape.leaf(v, requires_grad=i in wrt) for i, v in enumerate(inputs)]
    out = builder(*leaves)
    tape.backward(out)
    return out.value.copy(), [leaves[i].grad for i in wrt]


def finite_diff(fn: Callable[[np.ndarray], float], point, h: float = 1e-5, coords=None) -> np.ndarray:
    """Central-difference gradient of a scalar function.

    ``coords`` restricts the estimate to a subset of flat indices; the other
    entries of the result are left at zero. A ``longdouble`` point keeps
    its precision through the differences, which reference evaluators use.
    """
    if h <= 0:
        raise ValueError(f"finite_diff: step must be positive, got {h}")
    dtype = np.longdouble if np.asarray(point).dtype == np.longdouble else np.float64
    p = np.array(point, dtype=dtype)
    flat = p.reshape(-1)
    out = np.zeros_like(flat)
    idx = range(flat.size) if coords is None else coords
    for i in idx:
        orig = flat[i]
        flat[i] = orig + h
        fp = dtype(fn(p))
        flat[i] = orig - h
        fm = dtype(fn(p))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"finite_diff: non-finite function value at coordinate {i}")
        out[i] = (fp - fm) / (2.0 * h)
    return out.reshape(p.shape)
