"""Minimal reverse-mode differentiable tensor core over dense numpy arrays.

Computation is define-by-run: every primitive records its parents and a
backward closure on the result tensor, so the tape of live tensors *is*
the computation graph. ``backward`` walks that tape in reverse
topological order; ``grad_check`` compares the result against central
finite differences element by element.

The primitive set is deliberately small: matmul, 1-D convolution along
the feature axis, elementwise add/sub/mul, leaky-ReLU, tanh, exp, log,
square, clip, reduce-sum/mean, broadcast, concat, reshape. Tests verify
each against finite differences at 64-bit precision; training may run
at 32-bit.

All primitives are pure: inputs are never mutated, and identical inputs
give bitwise-identical outputs on one platform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

_FLOAT_DTYPES = (np.float32, np.float64)


class Tensor:
    """Dense real array plus tape links for reverse-mode differentiation."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.op = "leaf"
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar; keeps model code readable
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)


def as_tensor(value, dtype=None) -> Tensor:
    """Wrap arrays/scalars as constant tensors; pass tensors through."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value, dtype=dtype)


def _result(data, parents, backward_fn, op: str) -> Tensor:
    out = Tensor(data)
    out.op = op
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient over the axes numpy broadcasting introduced or stretched."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# primitives


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError as exc:
        raise ShapeError(f"add: cannot broadcast {a.shape} with {b.shape}") from exc

    def backward_fn(g):
        return (
            _unbroadcast(g, a.shape) if a.requires_grad else None,
            _unbroadcast(g, b.shape) if b.requires_grad else None,
        )

    return _result(data, (a, b), backward_fn, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data - b.data
    except ValueError as exc:
        raise ShapeError(f"sub: cannot broadcast {a.shape} with {b.shape}") from exc

    def backward_fn(g):
        return (
            _unbroadcast(g, a.shape) if a.requires_grad else None,
            _unbroadcast(-g, b.shape) if b.requires_grad else None,
        )

    return _result(data, (a, b), backward_fn, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError as exc:
        raise ShapeError(f"mul: cannot broadcast {a.shape} with {b.shape}") from exc

    def backward_fn(g):
        return (
            _unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(g * a.data, b.shape) if b.requires_grad else None,
        )

    return _result(data, (a, b), backward_fn, "mul")


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} x {b.shape}")
    data = a.data @ b.data

    def backward_fn(g):
        return (
            g @ b.data.T if a.requires_grad else None,
            a.data.T @ g if b.requires_grad else None,
        )

    return _result(data, (a, b), backward_fn, "matmul")


def conv1d(x, w, stride: int = 1, padding: int = 0) -> Tensor:
    """1-D convolution along the last (feature) axis.

    x: (batch, in_channels, length), w: (out_channels, in_channels, kernel).
    Zero padding; output length (L + 2p - K) // stride + 1.
    """
    x, w = as_tensor(x), as_tensor(w)
    if stride < 1:
        raise ShapeError(f"conv1d: stride must be >= 1, got {stride}")
    if x.data.ndim != 3 or w.data.ndim != 3:
        raise ShapeError(f"conv1d: need 3-D input and kernel, got {x.shape} and {w.shape}")
    batch, c_in, length = x.shape
    c_out, c_in_w, kernel = w.shape
    if c_in_w != c_in:
        raise ShapeError(f"conv1d: channel mismatch, input {c_in} vs kernel {c_in_w}")
    l_out = (length + 2 * padding - kernel) // stride + 1
    if l_out < 1:
        raise ShapeError(
            f"conv1d: kernel {kernel} with padding {padding} does not fit length {length}"
        )
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding))) if padding else x.data

    acc = np.zeros((batch, l_out, c_out), dtype=xp.dtype)
    for k in range(kernel):
        seg = xp[:, :, k : k + stride * l_out : stride]  # (B, Cin, Lout)
        acc += np.tensordot(seg, w.data[:, :, k], axes=([1], [1]))
    data = acc.transpose(0, 2, 1)

    def backward_fn(g):
        gw = gx = None
        if w.requires_grad:
            gw = np.zeros_like(w.data)
        if x.requires_grad:
            gxp = np.zeros_like(xp)
        gt = g.transpose(0, 2, 1)  # (B, Lout, Cout)
        for k in range(kernel):
            seg = xp[:, :, k : k + stride * l_out : stride]
            if gw is not None:
                gw[:, :, k] = np.tensordot(g, seg, axes=([0, 2], [0, 2]))
            if x.requires_grad:
                contrib = np.tensordot(gt, w.data[:, :, k], axes=([2], [0]))
                gxp[:, :, k : k + stride * l_out : stride] += contrib.transpose(0, 2, 1)
        if x.requires_grad:
            gx = gxp[:, :, padding : padding + length] if padding else gxp
        return (gx, gw)

    return _result(data, (x, w), backward_fn, "conv1d")


def leaky_relu(x, slope: float = 0.2) -> Tensor:
    """max(x, slope*x); at 0 the value is 0 and the subgradient is 1."""
    x = as_tensor(x)
    positive = x.data >= 0
    data = np.where(positive, x.data, slope * x.data)

    def backward_fn(g):
        return (np.where(positive, g, slope * g),)

    return _result(data, (x,), backward_fn, "leaky_relu")


def tanh(x) -> Tensor:
    x = as_tensor(x)
    data = np.tanh(x.data)

    def backward_fn(g):
        return (g * (1.0 - data * data),)

    return _result(data, (x,), backward_fn, "tanh")


def exp(x) -> Tensor:
    x = as_tensor(x)
    data = np.exp(x.data)

    def backward_fn(g):
        return (g * data,)

    return _result(data, (x,), backward_fn, "exp")


def log(x) -> Tensor:
    x = as_tensor(x)
    data = np.log(x.data)

    def backward_fn(g):
        return (g / x.data,)

    return _result(data, (x,), backward_fn, "log")


def square(x) -> Tensor:
    x = as_tensor(x)
    data = x.data * x.data

    def backward_fn(g):
        return (2.0 * g * x.data,)

    return _result(data, (x,), backward_fn, "square")


def clip(x, lo: float, hi: float) -> Tensor:
    """Clamp values to [lo, hi]; pass-through gradient on the closed interval."""
    x = as_tensor(x)
    if lo > hi:
        raise ShapeError(f"clip: lo {lo} exceeds hi {hi}")
    inside = (x.data >= lo) & (x.data <= hi)
    data = np.clip(x.data, lo, hi)

    def backward_fn(g):
        return (np.where(inside, g, 0.0),)

    return _result(data, (x,), backward_fn, "clip")


def _restore_axes(g, axis, in_shape, keepdims):
    if axis is None:
        return np.broadcast_to(g.reshape((1,) * len(in_shape)), in_shape)
    axes = axis if isinstance(axis, tuple) else (axis,)
    if not keepdims:
        for ax in sorted(a % len(in_shape) for a in axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, in_shape)


def reduce_sum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    data = x.data.sum(axis=axis, keepdims=keepdims)

    def backward_fn(g):
        return (_restore_axes(g, axis, x.shape, keepdims),)

    return _result(data, (x,), backward_fn, "reduce_sum")


def reduce_mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    data = x.data.mean(axis=axis, keepdims=keepdims)
    count = x.data.size / max(data.size, 1)

    def backward_fn(g):
        return (_restore_axes(g, axis, x.shape, keepdims) / count,)

    return _result(data, (x,), backward_fn, "reduce_mean")


def broadcast_to(x, shape) -> Tensor:
    x = as_tensor(x)
    shape = tuple(shape)
    try:
        data = np.broadcast_to(x.data, shape)
    except ValueError as exc:
        raise ShapeError(f"broadcast: cannot broadcast {x.shape} to {shape}") from exc

    def backward_fn(g):
        return (_unbroadcast(g, x.shape),)

    return _result(data, (x,), backward_fn, "broadcast")


def concat(tensors, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat: empty input list")
    try:
        data = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in ts]}") from exc
    sizes = [t.shape[axis] for t in ts]
    offsets = np.cumsum(sizes)[:-1]

    def backward_fn(g):
        pieces = np.split(g, offsets, axis=axis)
        return tuple(p if t.requires_grad else None for p, t in zip(pieces, ts))

    return _result(data, ts, backward_fn, "concat")


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    try:
        data = x.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot view {x.shape} as {tuple(shape)}") from exc

    def backward_fn(g):
        return (g.reshape(x.shape),)

    return _result(data, (x,), backward_fn, "reshape")


# ---------------------------------------------------------------------------
# engine


def _reverse_topological(root: Tensor):
    order, visited, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    order.reverse()
    return order


def backward(output: Tensor):
    """Accumulate d(output)/d(t) into t.grad for every tensor that requires it.

    The output must be scalar (size 1). Gradients add into any existing
    .grad, so zero them between independent passes.
    """
    if output.data.size != 1:
        raise ShapeError(f"backward: output must be scalar, got shape {output.shape}")
    if not output.requires_grad:
        return
    pending = {id(output): np.ones_like(output.data)}
    for node in _reverse_topological(output):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        node.grad = g if node.grad is None else node.grad + g
        if node._backward is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            pending[key] = pg if key not in pending else pending[key] + pg


def grad_check(fn, point: dict, step: float = 1e-5) -> float:
    """Max relative error between analytic gradients and central differences.

    ``fn`` maps the named tensors in ``point`` to a scalar Tensor and must be
    deterministic (draw any randomness outside and pass it in as constants).
    Error metric per element: |analytic - numeric| / max(1, |analytic|).
    """
    if step <= 0:
        raise ValueError(f"grad_check: step must be positive, got {step}")
    for t in point.values():
        t.zero_grad()
    out = fn(point)
    if out.data.size != 1:
        raise ShapeError(f"grad_check: fn must return a scalar, got shape {out.shape}")
    backward(out)

    worst = 0.0
    for t in point.values():
        if not t.requires_grad:
            continue
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat_data = t.data.reshape(-1)
        flat_grad = analytic.reshape(-1)
        for i in range(flat_data.size):
            saved = flat_data[i]
            flat_data[i] = saved + step
            f_plus = float(fn(point).data)
            flat_data[i] = saved - step
            f_minus = float(fn(point).data)
            flat_data[i] = saved
            numeric = (f_plus - f_minus) / (2.0 * step)
            a = float(flat_grad[i])
            worst = max(worst, abs(a - numeric) / max(1.0, abs(a)))
    return worst


# ---------------------------------------------------------------------------
# randomness


@dataclass
class RngState:
    """Counter-based random stream: (seed, counter) pins every draw.

    Each call derives a fresh generator from the pair and bumps the
    counter, so streams are reproducible and resumable after
    serialization of the two integers.
    """

    seed: int
    counter: int = 0

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must fit in u64, got {self.seed}")

    def _generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.counter),))
        self.counter += 1
        return np.random.Generator(np.random.PCG64(ss))

    def standard_normal(self, shape, dtype=np.float64) -> np.ndarray:
        return self._generator().standard_normal(size=shape, dtype=dtype)

    def integers(self, upper: int, size=None) -> np.ndarray:
        return self._generator().integers(0, upper, size=size)

    def copy(self) -> "RngState":
        return RngState(self.seed, self.counter)


def sample_standard_normal(rng: RngState, shape, dtype=np.float64) -> Tensor:
    """i.i.d. N(0,1) draws as a constant tensor; advances the rng counter."""
    return Tensor(rng.standard_normal(shape, dtype=dtype))
