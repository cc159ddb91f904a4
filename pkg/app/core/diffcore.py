# Copyright 2024
# Directory: ContourMARL/app/core/diffcore.py

"""
Dense float64 tensors with eager reverse-mode differentiation.
Every op records its parents and a backward closure; backward() replays
the graph in reverse topological order.
"""

import contextlib
import logging
import threading
from collections import OrderedDict
from typing import Callable, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ShapeMismatchError

logger = logging.getLogger(__name__)

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence[float]]

_EXP_CLAMP = 700.0
_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Evaluate without recording the graph (rollouts, target values)."""
    previous = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = previous


class Tensor:
    """A float64 array node in the computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "name", "op", "_parents", "_backward")

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        name: Optional[str] = None,
        _parents: Tuple["Tensor", ...] = (),
        _backward: Optional[Callable[[np.ndarray], None]] = None,
        op: str = "leaf",
    ):
        self.data = np.array(data, dtype=np.float64) if not isinstance(data, np.ndarray) or data.dtype != np.float64 else data
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self.op = op
        self._parents = _parents
        self._backward = _backward

    # -------- introspection --------
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{label})"

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    # -------- operators --------
    def __add__(self, other: ArrayLike) -> "Tensor":
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __truediv__(self, other: float) -> "Tensor":
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported; use mul with a reciprocal")
        return scale(self, 1.0 / float(other))

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        return matmul(self, other)

    def __getitem__(self, index) -> "Tensor":
        return slice_(self, index)

    # -------- method aliases --------
    def tanh(self) -> "Tensor":
        return tanh(self)

    def exp(self) -> "Tensor":
        return exp(self)

    def log(self) -> "Tensor":
        return log(self)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes: Optional[Sequence[int]] = None) -> "Tensor":
        return transpose(self, axes)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


def as_tensor(x: ArrayLike) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data: ArrayLike, name: Optional[str] = None) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def _make(data: np.ndarray, parents: Tuple[Tensor, ...], backward: Callable[[np.ndarray], None], op: str) -> Tensor:
    if grad_enabled() and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=parents, _backward=backward, op=op)
    return Tensor(data, op=op)


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatchError(op, a.shape, b.shape) from None


# ---------------------------------------------------------------- elementwise

def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), backward, "add")


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _make(a.data - b.data, (a, b), backward, "sub")


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), backward, "mul")


def neg(a: ArrayLike) -> Tensor:
    return scale(a, -1.0)


def scale(a: ArrayLike, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)

    def backward(g: np.ndarray) -> None:
        a._accumulate(g * c)

    return _make(a.data * c, (a,), backward, "scale")


def square(a: ArrayLike) -> Tensor:
    a = as_tensor(a)

    def backward(g: np.ndarray) -> None:
        a._accumulate(2.0 * g * a.data)

    return _make(a.data * a.data, (a,), backward, "square")


def _dtanh(y: np.ndarray) -> np.ndarray:
    return 1.0 - y * y


def tanh(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)

    def backward(g: np.ndarray) -> None:
        a._accumulate(g * _dtanh(y))

    return _make(y, (a,), backward, "tanh")


def exp(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    y = np.exp(np.minimum(a.data, _EXP_CLAMP))

    def backward(g: np.ndarray) -> None:
        a._accumulate(g * y * (a.data <= _EXP_CLAMP))

    return _make(y, (a,), backward, "exp")


def log(a: ArrayLike) -> Tensor:
    a = as_tensor(a)

    def backward(g: np.ndarray) -> None:
        a._accumulate(g / a.data)

    return _make(np.log(a.data), (a,), backward, "log")


def softplus(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    y = np.logaddexp(0.0, a.data)

    def backward(g: np.ndarray) -> None:
        # d/dx log(1 + e^x) = sigmoid(x)
        a._accumulate(g * np.exp(a.data - y))

    return _make(y, (a,), backward, "softplus")


def clip(a: ArrayLike, lo: float, hi: float) -> Tensor:
    a = as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)

    def backward(g: np.ndarray) -> None:
        a._accumulate(g * inside)

    return _make(np.clip(a.data, lo, hi), (a,), backward, "clip")


def minimum(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeMismatchError("minimum", a.shape, b.shape)
    pick_a = a.data <= b.data

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g * pick_a)
        if b.requires_grad:
            b._accumulate(g * ~pick_a)

    return _make(np.where(pick_a, a.data, b.data), (a, b), backward, "minimum")


# ---------------------------------------------------------------- linear algebra

def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatchError("matmul", a.shape, b.shape)
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeMismatchError("matmul", a.shape, b.shape) from None

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(_unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape))

    return _make(out, (a, b), backward, "matmul")


def transpose(a: ArrayLike, axes: Optional[Sequence[int]] = None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = list(range(a.ndim))
        axes[-2], axes[-1] = axes[-1], axes[-2]
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g: np.ndarray) -> None:
        a._accumulate(np.transpose(g, inverse))

    return _make(np.transpose(a.data, axes), (a,), backward, "transpose")


def reshape(a: ArrayLike, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError:
        raise ShapeMismatchError("reshape", a.shape, tuple(shape)) from None

    def backward(g: np.ndarray) -> None:
        a._accumulate(g.reshape(a.shape))

    return _make(out, (a,), backward, "reshape")


# ---------------------------------------------------------------- reductions

def sum_(a: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g: np.ndarray) -> None:
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape))

    return _make(np.asarray(out), (a,), backward, "sum")


def mean(a: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return scale(sum_(a, axis=axis, keepdims=keepdims), 1.0 / count)


def softmax(a: ArrayLike, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g: np.ndarray) -> None:
        a._accumulate(y * (g - (g * y).sum(axis=axis, keepdims=True)))

    return _make(y, (a,), backward, "softmax")


# ---------------------------------------------------------------- indexing

def concat(tensors: Sequence[ArrayLike], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeMismatchError("concat", tensors[0].shape, tensors[-1].shape) from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g: np.ndarray) -> None:
        for t, part in zip(tensors, np.split(g, bounds, axis=axis)):
            if t.requires_grad:
                t._accumulate(part)

    return _make(out, tuple(tensors), backward, "concat")


def slice_(a: ArrayLike, index) -> Tensor:
    """Basic (view) indexing: ints, slices, Ellipsis."""
    a = as_tensor(a)
    out = a.data[index]

    def backward(g: np.ndarray) -> None:
        full = np.zeros(a.shape)
        full[index] = g
        a._accumulate(full)

    return _make(np.array(out, dtype=np.float64), (a,), backward, "slice")


def take(a: ArrayLike, indices: Sequence[int], axis: int = 0) -> Tensor:
    """Gather along one axis; repeated indices accumulate their gradients."""
    a = as_tensor(a)
    indices = np.asarray(indices, dtype=np.int64)
    axis = axis % a.ndim

    def backward(g: np.ndarray) -> None:
        full = np.zeros(a.shape)
        moved = np.moveaxis(full, axis, 0)
        np.add.at(moved, indices, np.moveaxis(g, axis, 0))
        a._accumulate(full)

    return _make(np.take(a.data, indices, axis=axis), (a,), backward, "take")


def flip(a: ArrayLike, axis: int) -> Tensor:
    a = as_tensor(a)

    def backward(g: np.ndarray) -> None:
        a._accumulate(np.flip(g, axis=axis))

    return _make(np.flip(a.data, axis=axis).copy(), (a,), backward, "flip")


# ---------------------------------------------------------------- recurrence

def linear_scan(u: ArrayLike, A: ArrayLike) -> Tensor:
    """
    Linear recurrence along axis -2: h_t = A h_{t-1} + u_t with h_{-1} = 0.

    Args:
        u: Driving sequence (..., N, D), already projected (B x_t + bias)
        A: Transition matrix (D, D)

    Returns:
        Hidden states (..., N, D)
    """
    u, A = as_tensor(u), as_tensor(A)
    if u.ndim < 2 or A.shape != (u.shape[-1], u.shape[-1]):
        raise ShapeMismatchError("linear_scan", u.shape, A.shape)
    n = u.shape[-2]
    h = np.empty_like(u.data)
    carry = np.zeros(u.shape[:-2] + (u.shape[-1],))
    At = A.data.T
    for t in range(n):
        carry = carry @ At + u.data[..., t, :]
        h[..., t, :] = carry

    def backward(g: np.ndarray) -> None:
        gu = np.empty_like(g)
        gA = np.zeros(A.shape)
        back = np.zeros(g.shape[:-2] + (g.shape[-1],))
        for t in range(n - 1, -1, -1):
            back = back + g[..., t, :]
            gu[..., t, :] = back
            if t > 0:
                gA += np.einsum("...i,...j->ij", back, h[..., t - 1, :])
            back = back @ A.data
        if u.requires_grad:
            u._accumulate(gu)
        if A.requires_grad:
            A._accumulate(gA)

    return _make(h, (u, A), backward, "linear_scan")


# ---------------------------------------------------------------- backward

def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited = set()
    stack: List[Tuple[Tensor, bool]] = [(root, False)]
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
    return order


def backward(loss: Tensor, params: Optional["ParameterSet"] = None) -> Dict[str, np.ndarray]:
    """
    Reverse-mode gradient propagation from a scalar loss.

    Args:
        loss: Scalar tensor
        params: Optional parameter set; unreachable parameters get zero gradients

    Returns:
        Gradients keyed by parameter name (empty when params is None)
    """
    if loss.size != 1:
        raise ShapeMismatchError("backward (loss must be scalar)", loss.shape, ())
    if params is not None:
        params.zero_grad()
    if loss.requires_grad:
        _propagate(loss)
    return params.gradients() if params is not None else {}


def _propagate(loss: Tensor) -> None:
    order = _topological_order(loss)
    for node in order:
        node.grad = None
    loss.grad = np.ones(loss.shape)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------- parameters

class ParameterSet:
    """Ordered, named collection of trainable tensors."""

    def __init__(self, tensors: Optional[Mapping[str, ArrayLike]] = None):
        self._tensors: "OrderedDict[str, Tensor]" = OrderedDict()
        for name, value in (tensors or {}).items():
            self.add(name, value)

    def add(self, name: str, value: ArrayLike) -> Tensor:
        if name in self._tensors:
            raise KeyError(f"duplicate parameter name: {name}")
        data = value.data if isinstance(value, Tensor) else value
        tensor = parameter(np.array(data, dtype=np.float64, copy=True), name=name)
        self._tensors[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def items(self) -> Iterable[Tuple[str, Tensor]]:
        return self._tensors.items()

    def names(self) -> List[str]:
        return list(self._tensors)

    def tensors(self) -> List[Tensor]:
        return list(self._tensors.values())

    def zero_grad(self) -> None:
        for tensor in self._tensors.values():
            tensor.grad = np.zeros(tensor.shape)

    def gradients(self) -> Dict[str, np.ndarray]:
        return {
            name: (t.grad if t.grad is not None else np.zeros(t.shape))
            for name, t in self._tensors.items()
        }

    def state(self) -> Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._tensors.items()}

    def load_state(self, state: Mapping[str, np.ndarray], strict: bool = True) -> None:
        if strict:
            missing = sorted(set(self._tensors) - set(state))
            if missing:
                raise KeyError(f"missing parameters: {', '.join(missing)}")
        for name, tensor in self._tensors.items():
            if name not in state:
                continue
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != tensor.shape:
                raise ShapeMismatchError(f"load {name}", tensor.shape, value.shape)
            tensor.data = value.copy()

    def copy(self) -> "ParameterSet":
        return ParameterSet({name: t.data for name, t in self._tensors.items()})

    def non_finite(self) -> List[str]:
        return [name for name, t in self._tensors.items() if not np.all(np.isfinite(t.data))]

    def num_values(self) -> int:
        return int(sum(t.size for t in self._tensors.values()))


# ---------------------------------------------------------------- gradient check

def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-5,
    abs_tol: float = 1e-9,
    max_entries: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """
    Compare analytic gradients against central differences.

    Args:
        f: Rebuilds the graph and returns a scalar loss on each call
        params: Tensors to check (perturbed in place, then restored)
        eps: Finite-difference step
        abs_tol: Discrepancies below this are round-off and count as agreement
        max_entries: Optional cap on checked entries per parameter (random subset)
        rng: Generator for the subset choice

    Returns:
        Max relative error |a - n| / max(1e-8, |a| + |n|)
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    params = list(params)
    for p in params:
        p.requires_grad = True
        p.grad = None
    loss = f()
    if loss.size != 1:
        raise ShapeMismatchError("grad_check (loss must be scalar)", loss.shape, ())
    for p in params:
        p.grad = None
    if loss.requires_grad:
        _propagate(loss)
    analytic = [p.grad.copy() if p.grad is not None else np.zeros(p.shape) for p in params]

    rng = rng or np.random.default_rng(0)
    worst = 0.0
    for p, grad in zip(params, analytic):
        flat = p.data.reshape(-1)
        entries = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            entries = rng.choice(flat.size, size=max_entries, replace=False)
        for idx in entries:
            original = flat[idx]
            flat[idx] = original + eps
            plus = f().item()
            flat[idx] = original - eps
            minus = f().item()
            flat[idx] = original
            numeric = (plus - minus) / (2.0 * eps)
            a = grad.reshape(-1)[idx]
            diff = abs(a - numeric)
            if diff < abs_tol:
                continue
            worst = max(worst, diff / max(1e-8, abs(a) + abs(numeric)))
    return worst
