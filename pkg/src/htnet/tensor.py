"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every primitive computes its value with numpy and, when a :class:`Tape` is
active and at least one input requires a gradient, appends a record holding
the inputs, the output and a closure mapping the output gradient to input
gradients. :func:`backpropagate` walks the tape in reverse.

Without an active tape nothing is recorded, which is how evaluation runs.
"""

from __future__ import annotations

import builtins
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "ShapeError",
    "Tensor",
    "Tape",
    "backpropagate",
    "tensor",
    "add",
    "sub",
    "mul",
    "scale",
    "matmul",
    "concat",
    "index_select",
    "index_add",
    "softmax",
    "sigmoid",
    "relu",
    "elu",
    "layer_norm",
    "conv1d",
    "max_pool1d",
    "transpose",
    "reshape",
    "sum",
    "mean",
    "max",
    "log",
    "clip",
    "smooth_l1",
    "detach",
]


class ShapeError(ValueError):
    """Operand shapes do not conform to a primitive's arity rules."""

    def __init__(self, primitive: str, message: str):
        super().__init__(f"{primitive}: {message}")
        self.primitive = primitive


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError("item", f"expected a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __truediv__(self, other):
        if not isinstance(other, (int, float)):
            raise TypeError("division is only defined by a scalar")
        return scale(self, 1.0 / float(other))

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def tensor(data, requires_grad: bool = False, name: str | None = None) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=requires_grad, name=name)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# tape


@dataclass
class Record:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class Tape:
    """Ordered log of primitive applications.

    Use as a context manager; primitives evaluated inside the block are
    recorded in execution order, which is a valid topological order.
    """

    records: list[Record] = field(default_factory=list)

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        _stack().pop()

    def __len__(self) -> int:
        return len(self.records)


_local = threading.local()


def _stack() -> list[Tape]:
    stack = getattr(_local, "tapes", None)
    if stack is None:
        stack = _local.tapes = []
    return stack


def _active_tape() -> Tape | None:
    stack = _stack()
    return stack[-1] if stack else None


def _emit(op: str, inputs: tuple[Tensor, ...], value: np.ndarray, backward) -> Tensor:
    out = Tensor(value)
    tape = _active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.records.append(Record(op, inputs, out, backward))
    return out


def backpropagate(tape: Tape, loss: Tensor, leaves: Iterable[Tensor] | None = None) -> None:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every leaf on the tape.

    Leaves listed in ``leaves`` that the loss does not reach get a zero
    gradient, so callers can rely on ``grad`` being populated.
    """
    if loss.size != 1:
        raise ShapeError("backpropagate", f"loss must be scalar, got shape {loss.shape}")
    produced = {id(r.output) for r in tape.records}
    grads: dict[int, np.ndarray] = {}
    owners: dict[int, Tensor] = {}
    if loss.requires_grad:
        grads[id(loss)] = np.ones_like(loss.data)
        owners[id(loss)] = loss
    for rec in reversed(tape.records):
        g = grads.pop(id(rec.output), None)
        if g is None:
            continue
        for inp, gi in zip(rec.inputs, rec.backward(g)):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
                owners[key] = inp
    for key, g in grads.items():
        if key in produced:
            continue
        leaf = owners[key]
        leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g
    if leaves is not None:
        for leaf in leaves:
            if leaf.requires_grad and leaf.grad is None:
                leaf.grad = np.zeros_like(leaf.data)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, f"cannot broadcast {a.shape} with {b.shape}") from None


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("add", a, b)
    sa, sb = a.shape, b.shape
    return _emit("add", (a, b), a.data + b.data, lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("sub", a, b)
    sa, sb = a.shape, b.shape
    return _emit("sub", (a, b), a.data - b.data, lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("mul", a, b)
    ad, bd = a.data, b.data
    return _emit(
        "mul", (a, b), ad * bd, lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape))
    )


def scale(a: Tensor, c: float) -> Tensor:
    return _emit("scale", (a,), a.data * c, lambda g: (g * c,))


# ---------------------------------------------------------------------------
# linear algebra and layout


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes with numpy broadcasting."""
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul", f"operands must be at least 2-D, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", f"inner dimensions differ: {a.shape} @ {b.shape} ({a.shape[-1]} != {b.shape[-2]})")
    ad, bd = a.data, b.data
    try:
        if bd.ndim == 2 and ad.ndim > 2:
            # one large product instead of a stack of small ones
            out = (ad.reshape(-1, ad.shape[-1]) @ bd).reshape(ad.shape[:-1] + (bd.shape[1],))
        else:
            out = ad @ bd
    except ValueError:
        raise ShapeError("matmul", f"batch dimensions do not broadcast: {a.shape} @ {b.shape}") from None

    def backward(g):
        ga = None
        if a.requires_grad:
            if bd.ndim == 2 and g.ndim > 2:
                ga = (g.reshape(-1, g.shape[-1]) @ bd.T).reshape(g.shape[:-1] + (bd.shape[0],))
            else:
                ga = g @ np.swapaxes(bd, -1, -2)
        gb = None
        if b.requires_grad:
            if bd.ndim == 2:
                # shared weight: fold the batch axes into one product
                gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = np.swapaxes(ad, -1, -2) @ g
        return (
            None if ga is None else _unbroadcast(ga, ad.shape),
            None if gb is None else _unbroadcast(gb, bd.shape),
        )

    return _emit("matmul", (a, b), out, backward)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = tuple(_as_tensor(t) for t in tensors)
    if not tensors:
        raise ShapeError("concat", "nothing to concatenate")
    nd = tensors[0].ndim
    ax = axis % nd
    for t in tensors:
        if t.ndim != nd or any(t.shape[i] != tensors[0].shape[i] for i in range(nd) if i != ax):
            raise ShapeError("concat", f"shapes {[t.shape for t in tensors]} differ outside axis {axis}")
    sizes = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, sizes, axis=ax))

    return _emit("concat", tensors, np.concatenate([t.data for t in tensors], axis=ax), backward)


def _scatter_rows(index: np.ndarray, src: np.ndarray, n: int) -> np.ndarray:
    """Sum rows of ``src`` into an (n, ...) array at ``index`` (sort + reduceat)."""
    out = np.zeros((n,) + src.shape[1:])
    if index.size == 0:
        return out
    order = np.argsort(index, kind="stable")
    idx = index[order]
    starts = np.flatnonzero(np.concatenate([[True], idx[1:] != idx[:-1]]))
    out[idx[starts]] = np.add.reduceat(src[order], starts, axis=0)
    return out


def index_select(a: Tensor, index, axis: int = 0) -> Tensor:
    """Gather slices of ``a`` along ``axis`` (indices may repeat)."""
    idx = np.asarray(index, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError("index_select", f"index must be 1-D, got shape {idx.shape}")
    n = a.shape[axis]
    if idx.size and (idx.min() < -n or idx.max() >= n):
        raise ShapeError("index_select", f"index out of range for axis {axis} of size {n}")
    shape = a.shape

    ax = axis % len(shape)
    pos = np.where(idx < 0, idx + n, idx)

    def backward(g):
        moved = np.moveaxis(g, ax, 0)
        return (np.moveaxis(_scatter_rows(pos, moved, n), 0, ax),)

    return _emit("index_select", (a,), np.take(a.data, idx, axis=axis), backward)


def index_add(base: Tensor, index, src: Tensor) -> Tensor:
    """Return ``base`` with rows of ``src`` added at ``index`` along axis 0."""
    idx = np.asarray(index, dtype=np.int64)
    if idx.ndim != 1 or src.shape[0] != idx.size or src.shape[1:] != base.shape[1:]:
        raise ShapeError(
            "index_add", f"base {base.shape}, index {idx.shape}, src {src.shape} do not conform"
        )
    if idx.size and (idx.min() < 0 or idx.max() >= base.shape[0]):
        raise ShapeError("index_add", f"index out of range for {base.shape[0]} rows")
    out = base.data + _scatter_rows(idx, src.data, base.shape[0])
    return _emit("index_add", (base, src), out, lambda g: (g, g[idx]))


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    if axes is None:
        axes = tuple(range(a.ndim - 2)) + (a.ndim - 1, a.ndim - 2)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _emit("transpose", (a,), np.transpose(a.data, axes), lambda g: (np.transpose(g, inverse),))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    old = a.shape
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError:
        raise ShapeError("reshape", f"cannot reshape {old} into {tuple(shape)}") from None
    return _emit("reshape", (a,), out, lambda g: (g.reshape(old),))


# ---------------------------------------------------------------------------
# nonlinearities


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    return _emit("softmax", (a,), s, lambda g: (s * (g - (g * s).sum(axis=axis, keepdims=True)),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid(a.data)
    return _emit("sigmoid", (a,), s, lambda g: (g * s * (1.0 - s),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _emit("relu", (a,), np.where(mask, a.data, 0.0), lambda g: (g * mask,))


def elu(a: Tensor, alpha: float = 1.0) -> Tensor:
    x = a.data
    neg = alpha * np.expm1(np.minimum(x, 0.0))
    out = np.where(x > 0, x, neg)
    return _emit("elu", (a,), out, lambda g: (g * np.where(x > 0, 1.0, neg + alpha),))


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply the affine ``gamma``/``beta``."""
    n = x.shape[-1]
    if gamma.shape != (n,) or beta.shape != (n,):
        raise ShapeError("layer_norm", f"affine shapes {gamma.shape}/{beta.shape} do not match feature size {n}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    gd = gamma.data

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        dgamma = (g * xhat).sum(axis=lead)
        dbeta = g.sum(axis=lead)
        gx = g * gd
        dx = inv * (gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
        return dx, dgamma, dbeta

    return _emit("layer_norm", (x, gamma, beta), xhat * gd + beta.data, backward)


# ---------------------------------------------------------------------------
# temporal convolution / pooling (channels-last: batch x length x channels)


def conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Stride-1 convolution with zero 'same' padding.

    ``x`` is (B, L, C_in), ``weight`` is (k, C_in, C_out) with odd k.
    """
    if x.ndim != 3 or weight.ndim != 3:
        raise ShapeError("conv1d", f"expected x (B,L,C) and weight (k,C_in,C_out), got {x.shape}, {weight.shape}")
    k, cin, cout = weight.shape
    if k % 2 == 0:
        raise ShapeError("conv1d", f"kernel width must be odd, got {k}")
    if x.shape[2] != cin:
        raise ShapeError("conv1d", f"input channels {x.shape[2]} != weight channels {cin}")
    if bias is not None and bias.shape != (cout,):
        raise ShapeError("conv1d", f"bias shape {bias.shape} != ({cout},)")
    B, L, _ = x.shape
    pad = k // 2
    xp = np.pad(x.data, ((0, 0), (pad, pad), (0, 0)))
    windows = np.stack([xp[:, i : i + L, :] for i in range(k)], axis=2)  # B, L, k, C_in
    cols = windows.reshape(B * L, k * cin)
    wmat = weight.data.reshape(k * cin, cout)
    out = (cols @ wmat).reshape(B, L, cout)
    if bias is not None:
        out = out + bias.data
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        g2 = g.reshape(B * L, cout)
        gw = (cols.T @ g2).reshape(k, cin, cout)
        gcols = (g2 @ wmat.T).reshape(B, L, k, cin)
        gxp = np.zeros_like(xp)
        for i in range(k):
            gxp[:, i : i + L, :] += gcols[:, :, i, :]
        gx = gxp[:, pad : pad + L, :]
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 1))

    return _emit("conv1d", inputs, out, backward)


def max_pool1d(x: Tensor, kernel: int = 2, stride: int = 2) -> Tensor:
    """Max over windows along axis 1 with ceil-mode output length."""
    if x.ndim != 3:
        raise ShapeError("max_pool1d", f"expected (B,L,C), got {x.shape}")
    B, L, C = x.shape
    n_out = -(-builtins.max(L - kernel, 0) // stride) + 1
    need = (n_out - 1) * stride + kernel
    xp = np.pad(x.data, ((0, 0), (0, builtins.max(need - L, 0)), (0, 0)), constant_values=-np.inf)
    windows = np.stack([xp[:, o * stride : o * stride + kernel, :] for o in range(n_out)], axis=1)
    arg = windows.argmax(axis=2)  # B, n_out, C  (first index on ties)
    out = np.take_along_axis(windows, arg[:, :, None, :], axis=2)[:, :, 0, :]
    src = arg + (np.arange(n_out) * stride)[None, :, None]

    def backward(g):
        gx = np.zeros((B, L, C))
        bi = np.broadcast_to(np.arange(B)[:, None, None], src.shape)
        ci = np.broadcast_to(np.arange(C)[None, None, :], src.shape)
        np.add.at(gx, (bi, src, ci), g)
        return (gx,)

    return _emit("max_pool1d", (x,), out, backward)


# ---------------------------------------------------------------------------
# reductions


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        return (axis % ndim,)
    return tuple(a % ndim for a in axis)


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    axes = _norm_axis(axis, a.ndim)
    shape = a.shape

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape).copy(),)

    return _emit("sum", (a,), a.data.sum(axis=axes, keepdims=keepdims), backward)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axis(axis, a.ndim)
    count = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    if count == 0:
        raise ShapeError("mean", f"empty reduction over axes {axes} of shape {a.shape}")
    shape = a.shape

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, shape).copy(),)

    return _emit("mean", (a,), a.data.mean(axis=axes, keepdims=keepdims), backward)


def max(a: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:  # noqa: A001
    """Maximum along one axis; the gradient goes to the first maximizer."""
    ax = axis % a.ndim
    if a.shape[ax] == 0:
        raise ShapeError("max", f"empty reduction over axis {ax} of shape {a.shape}")
    arg = a.data.argmax(axis=ax)
    out = np.take_along_axis(a.data, np.expand_dims(arg, ax), axis=ax)
    shape = a.shape

    def backward(g):
        gk = g if keepdims else np.expand_dims(g, ax)
        gx = np.zeros(shape)
        np.put_along_axis(gx, np.expand_dims(arg, ax), gk, axis=ax)
        return (gx,)

    return _emit("max", (a,), out if keepdims else np.squeeze(out, ax), backward)


# ---------------------------------------------------------------------------
# loss helpers


def log(a: Tensor) -> Tensor:
    x = a.data
    return _emit("log", (a,), np.log(x), lambda g: (g / x,))


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    x = a.data
    inside = (x >= lo) & (x <= hi)
    return _emit("clip", (a,), np.clip(x, lo, hi), lambda g: (g * inside,))


def smooth_l1(e: Tensor) -> Tensor:
    """Smooth-L1 of the Euclidean norm over the last axis.

    0.5*|e|^2 where |e| < 1, |e| - 0.5 elsewhere; output drops the last axis.
    """
    x = e.data
    n = np.sqrt((x * x).sum(axis=-1))
    inner = n < 1.0
    out = np.where(inner, 0.5 * n * n, n - 0.5)
    safe = np.where(inner, 1.0, n)

    def backward(g):
        coef = np.where(inner, 1.0, 1.0 / safe)
        return ((g * coef)[..., None] * x,)

    return _emit("smooth_l1", (e,), out, backward)


def detach(a: Tensor) -> Tensor:
    return Tensor(a.data)
