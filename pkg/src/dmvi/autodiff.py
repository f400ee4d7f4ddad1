"""
Reverse-mode automatic differentiation over float64 numpy arrays

Every primitive records a closure that maps the output gradient to one
gradient per parent. Broadcasting follows numpy's rules; gradients are summed
back to each parent's shape.
"""

import math
import threading
from collections.abc import Callable, Iterable, Iterator, Mapping
from contextlib import contextmanager
from typing import Any, Optional, Union

import numpy as np
from scipy.special import logsumexp as _np_logsumexp

from dmvi.errors import ConfigurationError, NumericFailureError

ArrayLike = Union["Tensor", np.ndarray, float, int]
BackwardFn = Callable[[np.ndarray], tuple[Optional[np.ndarray], ...]]

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_K = 0.044715

_grad_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_grad_state, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Evaluate without recording the graph (evaluation-time sampling)."""
    previous = is_grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = previous


class Tensor:
    """A float64 array node in the computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")
    # ndarray <op> Tensor dispatches to the reflected Tensor operator
    __array_ufunc__ = None

    def __init__(self, data: Any, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Optional[BackwardFn] = None

    # --- introspection ---

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def __len__(self) -> int:
        return len(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # --- operators ---

    def __add__(self, other: ArrayLike) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: ArrayLike) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: ArrayLike) -> "Tensor":
        return mul(other, self)

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        return div(self, other)

    def __rtruediv__(self, other: ArrayLike) -> "Tensor":
        return div(other, self)

    def __neg__(self) -> "Tensor":
        return mul(self, -1.0)

    def __pow__(self, exponent: float) -> "Tensor":
        return power(self, exponent)

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        return matmul(self, other)

    def __getitem__(self, index: Any) -> "Tensor":
        return getitem(self, index)

    def sum(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: int) -> "Tensor":
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)

    # --- reverse pass ---

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """Accumulate d(self)/d(leaf) into every leaf that requires gradients."""
        if grad is None:
            if self.data.size != 1:
                raise ConfigurationError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)

        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))

        pending: dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(topo):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, parent_grad in zip(node._parents, node._backward(g)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = parent_grad if key not in pending else pending[key] + parent_grad


# =============================================================================
# GRAPH PLUMBING
# =============================================================================


def as_tensor(value: ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _node(data: np.ndarray, parents: tuple[Tensor, ...], backward: BackwardFn) -> Tensor:
    requires = is_grad_enabled() and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=requires)
    if requires:
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, size in enumerate(shape) if size == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# =============================================================================
# PRIMITIVES
# =============================================================================


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(a.data + b.data, (a, b), backward)


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _node(a.data - b.data, (a, b), backward)


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _node(a.data * b.data, (a, b), backward)


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)

    return _node(out, (a, b), backward)


def power(a: ArrayLike, exponent: float) -> Tensor:
    a = as_tensor(a)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (g * exponent * a.data ** (exponent - 1),)

    return _node(a.data**exponent, (a,), backward)


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ConfigurationError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return g @ b.data.T, a.data.T @ g

    return _node(a.data @ b.data, (a, b), backward)


def exp(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (g * out,)

    return _node(out, (a,), backward)


def log(a: ArrayLike) -> Tensor:
    a = as_tensor(a)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (g / a.data,)

    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)
    return _node(out, (a,), backward)


def tanh(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (g * (1.0 - out**2),)

    return _node(out, (a,), backward)


def gelu(a: ArrayLike) -> Tensor:
    """Tanh-approximated gelu."""
    a = as_tensor(a)
    x = a.data
    inner = _GELU_C * (x + _GELU_K * x**3)
    t = np.tanh(inner)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        d_inner = _GELU_C * (1.0 + 3.0 * _GELU_K * x**2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * d_inner),)

    return _node(0.5 * x * (1.0 + t), (a,), backward)


def softplus(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    x = a.data
    out = np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (g * 0.5 * (1.0 + np.tanh(0.5 * x)),)

    return _node(out, (a,), backward)


def clip(a: ArrayLike, lower: float, upper: float) -> Tensor:
    a = as_tensor(a)
    inside = (a.data > lower) & (a.data < upper)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (g * inside,)

    return _node(np.clip(a.data, lower, upper), (a,), backward)


def masked_fill(a: ArrayLike, mask: np.ndarray, value: float) -> Tensor:
    """Replace entries where mask is set by a constant; those entries carry no gradient."""
    a = as_tensor(a)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), a.shape)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (np.where(mask, 0.0, g),)

    return _node(np.where(mask, value, a.data), (a,), backward)


def tsum(a: ArrayLike, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _node(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)


def tmean(a: ArrayLike, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else a.shape[axis]
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def logsumexp(a: ArrayLike, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    out = _np_logsumexp(a.data, axis=axis)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        weights = np.exp(a.data - np.expand_dims(out, axis))
        return (np.expand_dims(g, axis) * weights,)

    return _node(out, (a,), backward)


def layer_norm(a: ArrayLike, eps: float = 1e-8) -> Tensor:
    """
    Normalize the last axis to zero mean and unit variance (no gain or offset).
    eps floors the variance of near-constant rows; other rows are exactly unit variance.
    """
    a = as_tensor(a)
    centered = a.data - a.data.mean(axis=-1, keepdims=True)
    var = (centered**2).mean(axis=-1, keepdims=True)
    floored = var < eps
    inv_std = 1.0 / np.sqrt(np.where(floored, eps, var))
    xhat = centered * inv_std

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        g_mean = g.mean(axis=-1, keepdims=True)
        # floored rows have a constant scale, so only the centering term remains
        gx_mean = np.where(floored, 0.0, (g * xhat).mean(axis=-1, keepdims=True))
        return (inv_std * (g - g_mean - xhat * gx_mean),)

    return _node(xhat, (a,), backward)


def reshape(a: ArrayLike, shape: tuple[int, ...]) -> Tensor:
    a = as_tensor(a)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (g.reshape(a.shape),)

    return _node(a.data.reshape(shape), (a,), backward)


def transpose(a: ArrayLike) -> Tensor:
    a = as_tensor(a)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (g.T,)

    return _node(a.data.T, (a,), backward)


def getitem(a: ArrayLike, index: Any) -> Tensor:
    a = as_tensor(a)
    parts = index if isinstance(index, tuple) else (index,)
    advanced = any(isinstance(p, (list, np.ndarray)) for p in parts)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        full = np.zeros_like(a.data)
        if advanced:
            np.add.at(full, index, g)
        else:
            full[index] = g
        return (full,)

    return _node(a.data[index], (a,), backward)


def concat(tensors: Iterable[ArrayLike], axis: int = -1) -> Tensor:
    parts = tuple(as_tensor(t) for t in tensors)
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def backward(g: np.ndarray) -> tuple[np.ndarray, ...]:
        return tuple(np.split(g, splits, axis=axis))

    return _node(np.concatenate([p.data for p in parts], axis=axis), parts, backward)


# =============================================================================
# GRADIENT EVALUATION
# =============================================================================


def evaluate_with_gradient(
    f: Callable[..., Tensor],
    params: Mapping[str, Tensor],
    *inputs: Any,
) -> tuple[float, dict[str, np.ndarray]]:
    """
    Evaluate scalar f(params, *inputs) and its exact gradient w.r.t. every parameter.

    Raises NumericFailureError naming the first parameter whose gradient is not finite.
    """
    for tensor in params.values():
        tensor.grad = None

    out = f(params, *inputs)
    if out.data.size != 1:
        raise ConfigurationError(f"objective must be scalar, got shape {out.shape}")
    value = float(out.data)
    if not math.isfinite(value):
        raise NumericFailureError("non-finite objective value", where="value")

    if out.requires_grad:
        out.backward()

    grads: dict[str, np.ndarray] = {}
    for name, tensor in params.items():
        grad = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        if not np.all(np.isfinite(grad)):
            raise NumericFailureError("non-finite gradient", where=name)
        grads[name] = grad
        tensor.grad = None
    return value, grads


def numerical_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function over every entry of x."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        upper = f(x)
        flat[i] = original - h
        lower = f(x)
        flat[i] = original
        out[i] = (upper - lower) / (2.0 * h)
    return grad
