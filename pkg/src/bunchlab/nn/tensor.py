"""Minimal reverse-mode autodiff over float64 numpy arrays.

A :class:`Tape` records operations in execution order; since tensors are
never mutated in place, execution order is a valid topological order and the
backward pass simply replays the records in reverse, accumulating gradients
on every tensor that participated.  Inference runs with no active tape and
pays no recording cost.

Only the operations needed by the actor, the ego critic, and the attention
based event critic are provided.  All gradient formulas are exact.
"""

from __future__ import annotations

import numpy as np

from . import kernels


class Tensor:
    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(())) 

    def accumulate(self, g: np.ndarray) -> None:
        # Non-inplace accumulation: gradient arrays are shared between records
        # and must never be mutated.
        self.grad = g if self.grad is None else self.grad + g

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Execution-ordered record of differentiable operations."""

    _ACTIVE: "Tape | None" = None

    def __init__(self):
        self._records: list[tuple[Tensor, object]] = []

    def __enter__(self) -> "Tape":
        if Tape._ACTIVE is not None:
            raise RuntimeError("nested tapes are not supported")
        Tape._ACTIVE = self
        return self

    def __exit__(self, *exc):
        Tape._ACTIVE = None
        return False

    def record(self, out: Tensor, backward_fn) -> None:
        self._records.append((out, backward_fn))

    def backward(self, root: Tensor) -> None:
        """Accumulate gradients of a scalar ``root`` into every participant."""
        if root.data.size != 1:
            raise ValueError(f"backward root must be scalar, got shape {root.shape}")
        root.accumulate(np.ones_like(root.data))
        for out, backward_fn in reversed(self._records):
            if out.grad is not None:
                backward_fn(out.grad)


def _active() -> Tape | None:
    return Tape._ACTIVE


class no_tape:
    """Temporarily suspend recording (used for target-network evaluation)."""

    def __enter__(self):
        self._prev = Tape._ACTIVE
        Tape._ACTIVE = None
        return self

    def __exit__(self, *exc):
        Tape._ACTIVE = self._prev
        return False


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _wire(value: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    needs = any(p.requires_grad for p in parents)
    out = Tensor(value, requires_grad=needs)
    tape = _active()
    if tape is not None and needs:
        tape.record(out, backward_fn)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bwd(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g, b.data.shape))

    return _wire(a.data + b.data, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bwd(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(-g, b.data.shape))

    return _wire(a.data - b.data, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bwd(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _wire(a.data * b.data, (a, b), bwd)


def scale(a: Tensor, c: float) -> Tensor:
    a = as_tensor(a)

    def bwd(g):
        if a.requires_grad:
            a.accumulate(g * c)

    return _wire(a.data * c, (a,), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bwd(g):
        if a.requires_grad:
            a.accumulate(g @ b.data.T)
        if b.requires_grad:
            b.accumulate(a.data.T @ g)

    return _wire(a.data @ b.data, (a, b), bwd)


def dense(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """Fused affine layer ``x @ W + b`` routed through the kernel backend."""
    x, W, b = as_tensor(x), as_tensor(W), as_tensor(b)
    if x.data.ndim != 2 or W.data.ndim != 2 or x.data.shape[1] != W.data.shape[0]:
        raise ValueError(
            f"dense shape mismatch: x {x.data.shape} @ W {W.data.shape}"
        )

    def bwd(g):
        gx, gW, gb = kernels.dense_bwd(x.data, W.data, g)
        if x.requires_grad:
            x.accumulate(gx)
        if W.requires_grad:
            W.accumulate(gW)
        if b.requires_grad:
            b.accumulate(gb)

    return _wire(kernels.dense_fwd(x.data, W.data, b.data), (x, W, b), bwd)


def tanh(a: Tensor) -> Tensor:
    a = as_tensor(a)
    y = kernels.tanh_fwd(a.data)

    def bwd(g):
        a.accumulate(kernels.tanh_bwd(y, g))

    return _wire(y, (a,), bwd)


def sigmoid(a: Tensor) -> Tensor:
    a = as_tensor(a)
    y = kernels.sigmoid_fwd(a.data)

    def bwd(g):
        a.accumulate(kernels.sigmoid_bwd(y, g))

    return _wire(y, (a,), bwd)


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    a = as_tensor(a)

    def bwd(g):
        a.accumulate(kernels.leaky_relu_bwd(a.data, g, slope))

    return _wire(kernels.leaky_relu_fwd(a.data, slope), (a,), bwd)


def softmax_col(a: Tensor) -> Tensor:
    """Softmax along axis 0 of an (n, 1) column (or a 1-D vector)."""
    a = as_tensor(a)
    flat = np.ascontiguousarray(a.data.reshape(-1))
    p = kernels.softmax_fwd(flat)

    def bwd(g):
        a.accumulate(kernels.softmax_bwd(p, g.reshape(-1)).reshape(a.data.shape))

    return _wire(p.reshape(a.data.shape), (a,), bwd)


def concat(parts: list[Tensor], axis: int) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                p.accumulate(g[tuple(sl)])

    return _wire(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), bwd)


def sum_rows(a: Tensor) -> Tensor:
    """Sum over axis 0, keeping dims: (n, d) -> (1, d)."""
    a = as_tensor(a)

    def bwd(g):
        a.accumulate(np.broadcast_to(g, a.data.shape))

    return _wire(a.data.sum(axis=0, keepdims=True), (a,), bwd)


def sum_all(a: Tensor) -> Tensor:
    a = as_tensor(a)

    def bwd(g):
        a.accumulate(np.full(a.data.shape, float(g)))

    return _wire(np.asarray(a.data.sum()), (a,), bwd)


def mean_all(a: Tensor) -> Tensor:
    a = as_tensor(a)
    n = a.data.size

    def bwd(g):
        a.accumulate(np.full(a.data.shape, float(g) / n))

    return _wire(np.asarray(a.data.mean()), (a,), bwd)


def square(a: Tensor) -> Tensor:
    a = as_tensor(a)

    def bwd(g):
        a.accumulate(g * (2.0 * a.data))

    return _wire(a.data * a.data, (a,), bwd)


def take_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    """Gather rows ``a[idx]``; duplicate indices accumulate on backward."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.intp)

    def bwd(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, idx, g)
        a.accumulate(ga)

    return _wire(a.data[idx], (a,), bwd)


def scatter_rows(a: Tensor, idx: np.ndarray, n_rows: int) -> Tensor:
    """Place rows of ``a`` at positions ``idx`` of an otherwise-zero (n_rows, d) output."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.intp)
    out = np.zeros((n_rows,) + a.data.shape[1:])
    out[idx] = a.data

    def bwd(g):
        a.accumulate(g[idx])

    return _wire(out, (a,), bwd)


def _segment_rep(starts: np.ndarray, n: int) -> np.ndarray:
    counts = np.diff(np.append(starts, n))
    return np.repeat(np.arange(len(starts)), counts)


def segment_softmax(x: Tensor, starts: np.ndarray) -> Tensor:
    """Softmax over contiguous row segments of an (n, 1) column.

    ``starts`` holds each segment's first row index (strictly increasing,
    beginning at 0); every segment must be nonempty.
    """
    x = as_tensor(x)
    starts = np.asarray(starts, dtype=np.intp)
    n = x.data.shape[0]
    rep = _segment_rep(starts, n)
    m = np.maximum.reduceat(x.data, starts, axis=0)
    z = np.exp(x.data - m[rep])
    denom = np.add.reduceat(z, starts, axis=0)
    p = z / denom[rep]

    def bwd(g):
        dot = np.add.reduceat(p * g, starts, axis=0)
        x.accumulate(p * (g - dot[rep]))

    return _wire(p, (x,), bwd)


def segment_sum(a: Tensor, starts: np.ndarray) -> Tensor:
    """Sum contiguous row segments: (n, d) -> (n_segments, d); segments nonempty."""
    a = as_tensor(a)
    starts = np.asarray(starts, dtype=np.intp)
    rep = _segment_rep(starts, a.data.shape[0])

    def bwd(g):
        a.accumulate(g[rep])

    return _wire(np.add.reduceat(a.data, starts, axis=0), (a,), bwd)


def sum_squares(a: Tensor) -> Tensor:
    """Scalar squared L2 norm of all entries."""
    return sum_all(square(a))
