# coding=utf-8
"""
Dense tensors with reverse-mode differentiation.

Every differentiable op appends one record (op name, inputs, output, vjp) to the
innermost active ``Tape``; ``backward`` replays the records in reverse order and
accumulates gradients additively. Ops executed while no tape is active are plain
forward computations.

Usage::
    >>> with Tape() as tape:
    ...     y = activation(affine(x, W, b), "sigmoid")
    ...     loss = total(y)
    >>> grads = backward(tape, loss)
    >>> grads[W]
"""
import logging
from contextlib import contextmanager
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from ._exceptions import (
    EmptyInputError,
    InvalidArgumentError,
    NonFiniteError,
    ShapeMismatchError,
)

logger = logging.getLogger(__name__)

SIGMOID_FLOOR = 1e-7
SIGMOID_CEIL = 1.0 - 1e-7

_dtype_stack: List[np.dtype] = [np.dtype(np.float32)]
_tape_stack: List["Tape"] = []

Number = Union[int, float]


def get_default_dtype() -> np.dtype:
    return _dtype_stack[-1]


@contextmanager
def default_dtype(dtype):
    """Temporarily switch the dtype used for new tensors, e.g. float64 for gradient checks."""
    _dtype_stack.append(np.dtype(dtype))
    try:
        yield
    finally:
        _dtype_stack.pop()


class Tensor:
    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = "", dtype=None):
        if dtype is None:
            if isinstance(data, (np.ndarray, np.generic)) and np.issubdtype(data.dtype, np.floating):
                dtype = data.dtype
            else:
                dtype = get_default_dtype()
        self.data = np.asarray(data, dtype=dtype)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        label = f"name={self.name!r}," if self.name else ""
        return f"Tensor({label}shape={self.shape},requires_grad={self.requires_grad})"

    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return scale(self, 1.0, other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return sub(self, other)
        return scale(self, 1.0, -other)

    def __rsub__(self, other):
        return scale(self, -1.0, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other: Number):
        return scale(self, 1.0 / other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def parameter(data, name: str = "", dtype=None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name, dtype=dtype)


def constant(data, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=False, dtype=dtype)


class TapeRecord:
    __slots__ = ("op", "inputs", "output", "vjp")

    def __init__(self, op: str, inputs: Sequence[Tensor], output: Tensor, vjp: Callable):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.vjp = vjp


class Tape:
    """Ordered record of executed differentiable ops."""

    def __init__(self):
        self.records: List[TapeRecord] = []

    def record(self, op: str, inputs: Sequence[Tensor], output: Tensor, vjp: Callable) -> None:
        self.records.append(TapeRecord(op, inputs, output, vjp))

    def ops(self) -> List[str]:
        return [r.op for r in self.records]

    def __len__(self) -> int:
        return len(self.records)

    def __enter__(self) -> "Tape":
        _tape_stack.append(self)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb) -> None:
        _tape_stack.remove(self)


def current_tape() -> Optional[Tape]:
    return _tape_stack[-1] if _tape_stack else None


def _emit(op: str, data: np.ndarray, inputs: Sequence[Tensor], vjp: Callable) -> Tensor:
    requires_grad = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=requires_grad)
    if requires_grad:
        tape = current_tape()
        if tape is not None:
            tape.record(op, inputs, out, vjp)
    return out


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"{op}: shape {a.shape} does not conform to shape {b.shape}")


class Gradients:
    """Gradient lookup keyed by tensor identity; unreached tensors read as zeros."""

    def __init__(self, store: Dict[int, Tuple[Tensor, np.ndarray]]):
        self._store = store

    def __getitem__(self, tensor: Tensor) -> np.ndarray:
        entry = self._store.get(id(tensor))
        if entry is None:
            return np.zeros_like(tensor.data)
        return entry[1]

    def __contains__(self, tensor: Tensor) -> bool:
        return id(tensor) in self._store

    def __len__(self) -> int:
        return len(self._store)


def backward(tape: Tape, loss: Tensor) -> Gradients:
    """
    Replay ``tape`` in reverse execution order from the scalar ``loss``.
    loss - Tensor, scalar, produced by ops recorded on ``tape`` (or a parameter itself)

    Exceptions::
        InvalidArgumentError, loss is not a scalar or does not require gradients
    """
    if loss.size != 1 or loss.ndim != 0:
        raise InvalidArgumentError(f"backward: loss must be a scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise InvalidArgumentError("backward: loss is not reachable from any parameter")
    store: Dict[int, Tuple[Tensor, np.ndarray]] = {id(loss): (loss, np.ones_like(loss.data))}
    for record in reversed(tape.records):
        entry = store.get(id(record.output))
        if entry is None:
            continue
        input_grads = record.vjp(entry[1])
        for tensor, grad in zip(record.inputs, input_grads):
            if grad is None or not tensor.requires_grad:
                continue
            held = store.get(id(tensor))
            if held is None:
                store[id(tensor)] = (tensor, np.array(grad, dtype=tensor.dtype))
            else:
                store[id(tensor)] = (tensor, held[1] + grad)
    return Gradients(store)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def affine(x: Tensor, W: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """
    x @ W.T + b over the last axis of x.
    x - Tensor (..., n); W - Tensor (m, n); b - (Optional) Tensor (m,)
    """
    if W.ndim != 2 or x.ndim < 1 or x.shape[-1] != W.shape[1]:
        raise ShapeMismatchError(f"affine: input shape {x.shape} does not conform to weight shape {W.shape}")
    if b is not None and b.shape != (W.shape[0],):
        raise ShapeMismatchError(f"affine: bias shape {b.shape} does not conform to weight shape {W.shape}")
    out = x.data @ W.data.T
    if b is not None:
        out = out + b.data
    n, m = W.shape[1], W.shape[0]

    def vjp(g):
        g2 = g.reshape(-1, m)
        gx = g @ W.data
        gW = g2.T @ x.data.reshape(-1, n)
        gb = g2.sum(axis=0) if b is not None else None
        return gx, gW, gb

    inputs = (x, W, b) if b is not None else (x, W)
    return _emit("affine", out, inputs, vjp)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """a @ b with a of rank 1 or 2 and b of rank 2."""
    if b.ndim != 2 or a.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise ShapeMismatchError(f"matmul: shape {a.shape} does not conform to shape {b.shape}")
    out = a.data @ b.data

    def vjp(g):
        ga = g @ b.data.T
        gb = np.outer(a.data, g) if a.ndim == 1 else a.data.T @ g
        return ga, gb

    return _emit("matmul", out, (a, b), vjp)


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return _emit("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return _emit("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    return _emit("mul", a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scale(x: Tensor, factor: Number, shift: Number = 0.0) -> Tensor:
    """factor * x + shift with python scalars."""
    dt = x.dtype
    out = x.data * dt.type(factor) + dt.type(shift)
    return _emit("scale", out, (x,), lambda g: (g * dt.type(factor),))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _emit("exp", out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    return _emit("log", np.log(x.data), (x,), lambda g: (g / x.data,))


def _tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return _emit("tanh", out, (x,), lambda g: (g * (1.0 - out * out),))


def _sigmoid(x: Tensor, clamp: bool) -> Tensor:
    half = x.dtype.type(0.5)
    raw = half * (1.0 + np.tanh(half * x.data))
    if not clamp:
        return _emit("sigmoid", raw, (x,), lambda g: (g * raw * (1.0 - raw),))
    out = np.clip(raw, SIGMOID_FLOOR, SIGMOID_CEIL).astype(x.dtype)
    inside = (raw > SIGMOID_FLOOR) & (raw < SIGMOID_CEIL)
    return _emit("sigmoid", out, (x,), lambda g: (np.where(inside, g * raw * (1.0 - raw), 0.0),))


def activation(x: Tensor, kind: str, clamp: bool = True) -> Tensor:
    """
    Elementwise nonlinearity.
    kind - str, "tanh" or "sigmoid"
    clamp - bool, sigmoid only: clamp to [1e-7, 1-1e-7] so that log D and log(1-D) stay finite
    """
    if kind == "tanh":
        return _tanh(x)
    if kind == "sigmoid":
        return _sigmoid(x, clamp)
    raise InvalidArgumentError(f"activation: unknown kind {kind!r}")


def tanh(x: Tensor) -> Tensor:
    return _tanh(x)


def sigmoid(x: Tensor, clamp: bool = True) -> Tensor:
    return _sigmoid(x, clamp)


# ---------------------------------------------------------------------------
# reductions and normalisation
# ---------------------------------------------------------------------------

def total(x: Tensor, axis: Optional[int] = None) -> Tensor:
    """Sum over ``axis`` (all axes when None)."""
    out = np.sum(x.data, axis=axis)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return _emit("sum", np.asarray(out, dtype=x.dtype), (x,), vjp)


def mean(x: Tensor) -> Tensor:
    if x.size == 0:
        raise EmptyInputError("mean: empty tensor")
    return scale(total(x), 1.0 / x.size)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically safe softmax (max subtraction) along ``axis``."""
    if x.size == 0 or x.shape[axis] == 0:
        raise EmptyInputError("softmax: empty input")
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def vjp(g):
        return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)

    return _emit("softmax", out, (x,), vjp)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    if x.size == 0 or x.shape[axis] == 0:
        raise EmptyInputError("log_softmax: empty input")
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    lse = np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)

    def vjp(g):
        return (g - probs * np.sum(g, axis=axis, keepdims=True),)

    return _emit("log_softmax", out, (x,), vjp)


def max_over_time(M: Tensor) -> Tensor:
    """
    Columnwise maximum over the time axis (second to last): (L, f) -> (f,), (B, L, f) -> (B, f).
    Ties route the gradient to the first maximal row.
    """
    if M.ndim < 2 or M.shape[-2] < 1:
        raise EmptyInputError(f"max_over_time: need at least one time step, got shape {M.shape}")
    arg = np.argmax(M.data, axis=-2)
    idx = np.expand_dims(arg, -2)
    out = np.take_along_axis(M.data, idx, axis=-2).squeeze(-2)

    def vjp(g):
        grad = np.zeros_like(M.data)
        np.put_along_axis(grad, idx, np.expand_dims(g, -2), axis=-2)
        return (grad,)

    return _emit("max_over_time", out, (M,), vjp)


# ---------------------------------------------------------------------------
# indexing and layout
# ---------------------------------------------------------------------------

def take(table: Tensor, ids) -> Tensor:
    """Rows of ``table`` selected by integer ``ids`` along axis 0 (embedding lookup)."""
    ids = np.asarray(ids, dtype=np.int64)
    rows = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= rows):
        raise InvalidArgumentError(f"take: id out of range for table of {rows} rows")
    out = np.asarray(table.data[ids])

    def vjp(g):
        grad = np.zeros_like(table.data)
        np.add.at(grad, ids, g)
        return (grad,)

    return _emit("take", out, (table,), vjp)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not tensors:
        raise EmptyInputError("concat: no tensors")
    ax = axis % tensors[0].ndim
    for t in tensors[1:]:
        if t.ndim != tensors[0].ndim or t.shape[:ax] + t.shape[ax + 1:] != tensors[0].shape[:ax] + tensors[0].shape[ax + 1:]:
            raise ShapeMismatchError(f"concat: shape {t.shape} does not conform to shape {tensors[0].shape}")
    out = np.concatenate([t.data for t in tensors], axis=ax)
    bounds = np.cumsum([0] + [t.shape[ax] for t in tensors])

    def vjp(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=ax) for i in range(len(tensors)))

    return _emit("concat", out, tuple(tensors), vjp)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise EmptyInputError("stack: no tensors")
    for t in tensors[1:]:
        _same_shape("stack", t, tensors[0])
    out = np.stack([t.data for t in tensors], axis=axis)

    def vjp(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _emit("stack", out, tuple(tensors), vjp)


def slice_axis(x: Tensor, start: int, stop: int, axis: int = 0) -> Tensor:
    ax = axis % x.ndim
    if not 0 <= start <= stop <= x.shape[ax]:
        raise ShapeMismatchError(f"slice_axis: [{start}:{stop}] outside shape {x.shape} on axis {ax}")
    index = [slice(None)] * x.ndim
    index[ax] = slice(start, stop)
    index = tuple(index)
    out = x.data[index]

    def vjp(g):
        grad = np.zeros_like(x.data)
        grad[index] = g
        return (grad,)

    return _emit("slice", out, (x,), vjp)


def pad_axis(x: Tensor, before: int, after: int, axis: int = 0) -> Tensor:
    """Zero padding along one axis."""
    ax = axis % x.ndim
    widths = [(0, 0)] * x.ndim
    widths[ax] = (before, after)
    out = np.pad(x.data, widths)
    index = [slice(None)] * x.ndim
    index[ax] = slice(before, before + x.shape[ax])
    index = tuple(index)
    return _emit("pad", out, (x,), lambda g: (g[index],))


def reshape(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    out = x.data.reshape(shape)
    return _emit("reshape", out, (x,), lambda g: (g.reshape(x.shape),))


def dropout(x: Tensor, p: float, rng: Optional[np.random.Generator], training: bool) -> Tensor:
    """
    Inverted dropout: zero each entry with probability p and scale survivors by 1/(1-p).
    Identity when not training or when p == 0.
    """
    if not 0.0 <= p < 1.0:
        raise InvalidArgumentError(f"dropout: probability must lie in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise InvalidArgumentError("dropout: training mode needs a seeded rng")
    keep = (rng.random(x.shape) >= p).astype(x.dtype) * x.dtype.type(1.0 / (1.0 - p))
    return _emit("dropout", x.data * keep, (x,), lambda g: (g * keep,))


# ---------------------------------------------------------------------------
# optimisation and verification
# ---------------------------------------------------------------------------

def sgd_step(params: Sequence[Tensor], grads: Union[Gradients, Sequence[np.ndarray]], lr: float) -> None:
    """
    theta <- theta - lr * g, in place on each parameter's data.
    grads - Gradients from ``backward`` or a sequence aligned with ``params``
    """
    if lr < 0:
        raise InvalidArgumentError(f"sgd_step: learning rate must be non-negative, got {lr}")
    if not isinstance(grads, Gradients) and len(grads) != len(params):
        raise ShapeMismatchError(f"sgd_step: {len(params)} parameters but {len(grads)} gradients")
    if lr == 0:
        return
    for i, p in enumerate(params):
        g = grads[p] if isinstance(grads, Gradients) else np.asarray(grads[i])
        if g.shape != p.shape:
            raise ShapeMismatchError(
                f"sgd_step: gradient shape {g.shape} does not conform to parameter {p.name or i} shape {p.shape}")
        p.data -= (p.dtype.type(lr) * g).astype(p.dtype)


def finite_diff_check(
        f: Callable[[Sequence[Tensor]], Tensor],
        params: Sequence[Tensor],
        eps: float = 1e-5,
        max_coords_per_param: Optional[int] = None,
        seed: int = 0,
) -> float:
    """
    Compare gradients from ``backward`` with central differences (f(t+eps)-f(t-eps))/(2 eps).
    f - callable building a scalar Tensor from ``params`` with the ops of this module
    params - float64 parameters
    eps - float, step, > 0
    max_coords_per_param - (Optional) int, check a seeded sample of at most this many
        coordinates per parameter instead of every coordinate

    Returns the max over checked coordinates of |analytic - numeric| / max(1e-8, |analytic| + |numeric|)

    Exceptions::
        InvalidArgumentError, eps <= 0 or a parameter is not float64
        NonFiniteError, f evaluated to a non-finite value
    """
    if eps <= 0:
        raise InvalidArgumentError(f"finite_diff_check: eps must be positive, got {eps}")
    for p in params:
        if p.dtype != np.float64:
            raise InvalidArgumentError(f"finite_diff_check: parameter {p.name!r} is {p.dtype}, need float64")

    with Tape() as tape:
        loss = f(params)
    _finite_or_raise(loss)
    if loss.requires_grad:
        grads = backward(tape, loss)
        analytic = [grads[p] for p in params]
    else:
        analytic = [np.zeros_like(p.data) for p in params]

    rng = np.random.default_rng(seed)
    worst = 0.0
    checked = 0
    for p, a in zip(params, analytic):
        coords = list(np.ndindex(*p.shape))
        if max_coords_per_param is not None and len(coords) > max_coords_per_param:
            picked = rng.choice(len(coords), size=max_coords_per_param, replace=False)
            coords = [coords[i] for i in sorted(picked)]
        for idx in coords:
            saved = p.data[idx]
            p.data[idx] = saved + eps
            up = _finite_or_raise(f(params))
            p.data[idx] = saved - eps
            down = _finite_or_raise(f(params))
            p.data[idx] = saved
            numeric = (up - down) / (2.0 * eps)
            err = abs(a[idx] - numeric) / max(1e-8, abs(a[idx]) + abs(numeric))
            worst = max(worst, float(err))
            checked += 1
    logger.debug(f"<FiniteDiff>:PARAMS={len(params)},COORDS={checked},MAX_REL_ERROR={worst:.3e}")
    return worst


def _finite_or_raise(value: Tensor) -> float:
    v = value.item()
    if not np.isfinite(v):
        raise NonFiniteError(f"finite_diff_check: objective evaluated to {v}")
    return v


def all_finite(tensors: Iterable[Tensor]) -> bool:
    return all(bool(np.all(np.isfinite(t.data))) for t in tensors)


class ParamGroup:
    """Named, ordered set of trainable tensors. Subclasses list their tensors in ``names``."""

    names: Tuple[str, ...] = ()

    def named_parameters(self, prefix: str = "") -> List[Tuple[str, Tensor]]:
        pairs = []
        for name in self.names:
            value = getattr(self, name)
            if isinstance(value, ParamGroup):
                pairs.extend(value.named_parameters(f"{prefix}{name}."))
            else:
                pairs.append((f"{prefix}{name}", value))
        return pairs

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]


def xavier_uniform(rng: np.random.Generator, shape: Tuple[int, ...], dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (shape[0] + shape[-1]))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)
