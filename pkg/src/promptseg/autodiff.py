"""Reverse-mode automatic differentiation on numpy arrays.

A Tensor wraps an ndarray plus an optional gradient. Operations executed
while a Tape is active append backward closures to that tape; Tape.backward
seeds the root with ones and walks the records once in reverse execution
order, accumulating into .grad of every tensor with requires_grad.

Element-wise binary ops require operands of identical shape, or one plain
Python/numpy scalar. Any other broadcasting must go through broadcast_to so
the reduction in the backward pass is explicit.
"""

from __future__ import annotations

import threading

import numpy as np

from .errors import PartitionError, ShapeError

_STATE = threading.local()


def _tape_stack() -> list:
    stack = getattr(_STATE, "stack", None)
    if stack is None:
        stack = []
        _STATE.stack = stack
    return stack


def active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered record of executed ops; context manager activates it."""

    def __init__(self):
        self._records: list = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        popped = _tape_stack().pop()
        assert popped is self
        return False

    def record(self, backward_fn) -> None:
        self._records.append(backward_fn)

    def backward(self, root: "Tensor") -> None:
        if root.data.size != 1:
            raise ShapeError(f"backward root must be scalar, got shape {root.data.shape}")
        root.grad = np.ones_like(root.data)
        for fn in reversed(self._records):
            fn()

    def __len__(self) -> int:
        return len(self._records)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar; constants may be Python scalars
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other, like=self), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __pow__(self, const):
        return powc(self, const)

    def __neg__(self):
        return mul(self, -1.0)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, shape):
        return reshape(self, shape)


def _as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=like.data.dtype if like is not None else np.float64)
    return Tensor(arr)


def _is_scalar_operand(x) -> bool:
    return np.isscalar(x) or (isinstance(x, np.ndarray) and x.ndim == 0)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _make_out(data: np.ndarray, *inputs: Tensor) -> tuple[Tensor, bool]:
    tape = active_tape()
    track = tape is not None and any(t.requires_grad for t in inputs)
    return Tensor(data, requires_grad=track), track


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.data.shape != b.data.shape:
        raise ShapeError(
            f"{op} requires identical shapes or a scalar operand, "
            f"got {a.data.shape} and {b.data.shape}; use broadcast_to first"
        )


def _binary_operands(a, b, op: str) -> tuple[Tensor, Tensor]:
    if not isinstance(a, Tensor) and not isinstance(b, Tensor):
        raise TypeError(f"{op} needs at least one Tensor")
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        if not _is_scalar_operand(b):
            b = np.asarray(b)
            if b.shape != a.data.shape:
                raise ShapeError(
                    f"{op}: constant of shape {b.shape} does not match {a.data.shape}"
                )
        return a, _as_tensor(b, like=a)
    if isinstance(b, Tensor) and not isinstance(a, Tensor):
        if not _is_scalar_operand(a):
            a = np.asarray(a)
            if a.shape != b.data.shape:
                raise ShapeError(
                    f"{op}: constant of shape {a.shape} does not match {b.data.shape}"
                )
        return _as_tensor(a, like=b), b
    if a.data.ndim != 0 and b.data.ndim != 0:
        _check_same_shape(a, b, op)
    return a, b


def _reduce_like(g: np.ndarray, target_shape: tuple[int, ...]) -> np.ndarray:
    """Sum g down to target_shape (used when a 0-d tensor met an array)."""
    if g.shape == target_shape:
        return g
    return g.sum().reshape(target_shape) if target_shape == () else g.sum(axis=tuple(
        range(g.ndim - len(target_shape))))


def add(a, b) -> Tensor:
    a, b = _binary_operands(a, b, "add")
    out, track = _make_out(a.data + b.data, a, b)
    if track:
        def _bw():
            g = out.grad
            if g is None:
                return
            _accum(a, _reduce_like(g, a.data.shape))
            _accum(b, _reduce_like(g, b.data.shape))
        active_tape().record(_bw)
    return out


def sub(a, b) -> Tensor:
    a, b = _binary_operands(a, b, "sub")
    out, track = _make_out(a.data - b.data, a, b)
    if track:
        def _bw():
            g = out.grad
            if g is None:
                return
            _accum(a, _reduce_like(g, a.data.shape))
            _accum(b, _reduce_like(-g, b.data.shape))
        active_tape().record(_bw)
    return out


def mul(a, b) -> Tensor:
    a, b = _binary_operands(a, b, "mul")
    out, track = _make_out(a.data * b.data, a, b)
    if track:
        ad, bd = a.data, b.data
        def _bw():
            g = out.grad
            if g is None:
                return
            _accum(a, _reduce_like(g * bd, a.data.shape))
            _accum(b, _reduce_like(g * ad, b.data.shape))
        active_tape().record(_bw)
    return out


def div(a, b) -> Tensor:
    a, b = _binary_operands(a, b, "div")
    out, track = _make_out(a.data / b.data, a, b)
    if track:
        ad, bd = a.data, b.data
        def _bw():
            g = out.grad
            if g is None:
                return
            _accum(a, _reduce_like(g / bd, a.data.shape))
            _accum(b, _reduce_like(-g * ad / (bd * bd), b.data.shape))
        active_tape().record(_bw)
    return out


def powc(a: Tensor, const: float) -> Tensor:
    c = float(const)
    out, track = _make_out(a.data ** c, a)
    if track:
        ad = a.data
        def _bw():
            g = out.grad
            if g is None:
                return
            _accum(a, g * c * ad ** (c - 1.0))
        active_tape().record(_bw)
    return out


def texp(a: Tensor) -> Tensor:
    out, track = _make_out(np.exp(a.data), a)
    if track:
        od = out.data
        def _bw():
            g = out.grad
            if g is None:
                return
            _accum(a, g * od)
        active_tape().record(_bw)
    return out


def tlog(a: Tensor) -> Tensor:
    out, track = _make_out(np.log(a.data), a)
    if track:
        ad = a.data
        def _bw():
            g = out.grad
            if g is None:
                return
            _accum(a, g / ad)
        active_tape().record(_bw)
    return out


def relu(a: Tensor) -> Tensor:
    out, track = _make_out(np.maximum(a.data, 0.0), a)
    if track:
        mask = a.data > 0.0
        def _bw():
            g = out.grad
            if g is None:
                return
            _accum(a, g * mask)
        active_tape().record(_bw)
    return out


def clamp_min(a: Tensor, floor: float) -> Tensor:
    """Elementwise max(a, floor); gradient flows only where a exceeds the floor."""
    c = float(floor)
    out, track = _make_out(np.maximum(a.data, c), a)
    if track:
        mask = a.data > c
        def _bw():
            g = out.grad
            if g is None:
                return
            _accum(a, g * mask)
        active_tape().record(_bw)
    return out


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out, track = _make_out(a.data.sum(axis=axis, keepdims=keepdims), a)
    if track:
        in_shape = a.data.shape
        def _bw():
            g = out.grad
            if g is None:
                return
            if axis is None:
                _accum(a, np.broadcast_to(g.reshape((1,) * len(in_shape)), in_shape).copy()
                       if in_shape else g)
                return
            gg = g
            if not keepdims:
                gg = np.expand_dims(gg, axis)
            _accum(a, np.broadcast_to(gg, in_shape).copy())
        active_tape().record(_bw)
    return out


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.data.shape[ax] for ax in axes]))
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {a.data.shape} @ {b.data.shape}")
    out, track = _make_out(a.data @ b.data, a, b)
    if track:
        ad, bd = a.data, b.data
        def _bw():
            g = out.grad
            if g is None:
                return
            _accum(a, g @ bd.T)
            _accum(b, ad.T @ g)
        active_tape().record(_bw)
    return out


def gather(a: Tensor, index: np.ndarray) -> Tensor:
    """out[i] = a[index[i]] along axis 0; adjoint of scatter_add."""
    idx = np.asarray(index)
    if idx.ndim != 1 or not np.issubdtype(idx.dtype, np.integer):
        raise ShapeError("gather index must be a 1-D integer array")
    out, track = _make_out(a.data[idx], a)
    if track:
        def _bw():
            g = out.grad
            if g is None:
                return
            if not a.requires_grad:
                return
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            np.add.at(a.grad, idx, g)
        active_tape().record(_bw)
    return out


def scatter_add(a: Tensor, index: np.ndarray, num_rows: int) -> Tensor:
    """out[j] = sum of a[i] over i with index[i] == j; adjoint of gather."""
    idx = np.asarray(index)
    if idx.ndim != 1 or not np.issubdtype(idx.dtype, np.integer):
        raise ShapeError("scatter_add index must be a 1-D integer array")
    if idx.shape[0] != a.data.shape[0]:
        raise ShapeError(
            f"scatter_add index length {idx.shape[0]} != rows {a.data.shape[0]}")
    if len(idx) and (idx.min() < 0 or idx.max() >= num_rows):
        raise ShapeError("scatter_add index out of range")
    data = np.zeros((num_rows,) + a.data.shape[1:], dtype=a.data.dtype)
    np.add.at(data, idx, a.data)
    out, track = _make_out(data, a)
    if track:
        def _bw():
            g = out.grad
            if g is None:
                return
            _accum(a, g[idx])
        active_tape().record(_bw)
    return out


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out, track = _make_out(y, a)
    if track:
        def _bw():
            g = out.grad
            if g is None:
                return
            yd = out.data
            dot = (g * yd).sum(axis=axis, keepdims=True)
            _accum(a, yd * (g - dot))
        active_tape().record(_bw)
    return out


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    if not tensors:
        raise ShapeError("concat of zero tensors")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    out, track = _make_out(data, *tensors)
    if track:
        sizes = [t.data.shape[axis] for t in tensors]
        offsets = np.cumsum([0] + sizes)
        def _bw():
            g = out.grad
            if g is None:
                return
            for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                _accum(t, g[tuple(sl)])
        active_tape().record(_bw)
    return out


def reshape(a: Tensor, shape) -> Tensor:
    out, track = _make_out(a.data.reshape(shape), a)
    if track:
        in_shape = a.data.shape
        def _bw():
            g = out.grad
            if g is None:
                return
            _accum(a, g.reshape(in_shape))
        active_tape().record(_bw)
    return out


def broadcast_to(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    shape = tuple(shape)
    try:
        data = np.broadcast_to(a.data, shape).copy()
    except ValueError as exc:
        raise ShapeError(f"cannot broadcast {a.data.shape} to {shape}") from exc
    out, track = _make_out(data, a)
    if track:
        in_shape = a.data.shape
        def _bw():
            g = out.grad
            if g is None:
                return
            lead = g.ndim - len(in_shape)
            axes = tuple(range(lead)) + tuple(
                lead + i for i, s in enumerate(in_shape) if s == 1 and g.shape[lead + i] != 1)
            red = g.sum(axis=axes, keepdims=False) if axes else g
            _accum(a, red.reshape(in_shape))
        active_tape().record(_bw)
    return out


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"slice_cols expects a 2-D tensor, got {a.data.shape}")
    out, track = _make_out(a.data[:, start:stop].copy(), a)
    if track:
        def _bw():
            g = out.grad
            if g is None:
                return
            full = np.zeros_like(a.data)
            full[:, start:stop] = g
            _accum(a, full)
        active_tape().record(_bw)
    return out


def attention(q: Tensor, k: Tensor, v: Tensor, boundaries: np.ndarray) -> Tensor:
    """Scaled dot-product attention restricted to contiguous patches.

    q, k, v are [n, heads, dim]; boundaries is an offsets array [P+1] with
    boundaries[0] == 0 and boundaries[-1] == n. Rows attend only to rows of
    their own patch: softmax(q @ k^T / sqrt(dim)) @ v per patch and head.
    """
    for name, t in (("q", q), ("k", k), ("v", v)):
        if t.data.ndim != 3:
            raise ShapeError(f"attention {name} must be [n, heads, dim], got {t.data.shape}")
    if not (q.data.shape == k.data.shape == v.data.shape):
        raise ShapeError("attention q, k, v shapes must match")
    bounds = np.asarray(boundaries, dtype=np.int64)
    n = q.data.shape[0]
    if bounds.ndim != 1 or len(bounds) < 2 or bounds[0] != 0 or bounds[-1] != n:
        raise PartitionError(f"boundaries must run 0..{n}, got {bounds}")
    if (np.diff(bounds) <= 0).any():
        raise PartitionError("boundaries must be strictly increasing")

    dim = q.data.shape[2]
    scale = 1.0 / np.sqrt(dim)
    out_data = np.empty_like(q.data)
    attn_cache: list[np.ndarray] = []
    spans = list(zip(bounds[:-1], bounds[1:]))
    for lo, hi in spans:
        qh = q.data[lo:hi].transpose(1, 0, 2)  # [h, m, d]
        kh = k.data[lo:hi].transpose(1, 0, 2)
        vh = v.data[lo:hi].transpose(1, 0, 2)
        scores = (qh @ kh.transpose(0, 2, 1)) * scale  # [h, m, m]
        scores -= scores.max(axis=-1, keepdims=True)
        e = np.exp(scores)
        attn = e / e.sum(axis=-1, keepdims=True)
        attn_cache.append(attn)
        out_data[lo:hi] = (attn @ vh).transpose(1, 0, 2)

    out, track = _make_out(out_data, q, k, v)
    if track:
        def _bw():
            g = out.grad
            if g is None:
                return
            dq = np.zeros_like(q.data)
            dk = np.zeros_like(k.data)
            dv = np.zeros_like(v.data)
            for (lo, hi), attn in zip(spans, attn_cache):
                gh = g[lo:hi].transpose(1, 0, 2)  # [h, m, d]
                qh = q.data[lo:hi].transpose(1, 0, 2)
                kh = k.data[lo:hi].transpose(1, 0, 2)
                vh = v.data[lo:hi].transpose(1, 0, 2)
                dv[lo:hi] = (attn.transpose(0, 2, 1) @ gh).transpose(1, 0, 2)
                dattn = gh @ vh.transpose(0, 2, 1)  # [h, m, m]
                dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
                dq[lo:hi] = ((dscores @ kh) * scale).transpose(1, 0, 2)
                dk[lo:hi] = ((dscores.transpose(0, 2, 1) @ qh) * scale).transpose(1, 0, 2)
            _accum(q, dq)
            _accum(k, dk)
            _accum(v, dv)
        active_tape().record(_bw)
    return out


def grad_check(fn, arrays: list[np.ndarray], eps: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences.

    fn maps Tensors (one per input array) to a scalar Tensor. The error for
    each element is |analytic - numeric| / max(1e-8, |analytic| + |numeric|);
    the max over all elements of all inputs is returned.
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    with Tape() as tape:
        out = fn(*tensors)
        if out.data.size != 1:
            raise ShapeError("grad_check target must be scalar")
        tape.backward(out)

    def evaluate() -> float:
        return float(fn(*[Tensor(a) for a in arrays]).data)

    worst = 0.0
    for t, a in zip(tensors, arrays):
        analytic = t.grad if t.grad is not None else np.zeros_like(a)
        flat = a.reshape(-1)
        an_flat = analytic.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = evaluate()
            flat[i] = orig - eps
            f_minus = evaluate()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            err = abs(an_flat[i] - numeric) / max(1e-8, abs(an_flat[i]) + abs(numeric))
            worst = max(worst, err)
    return worst
