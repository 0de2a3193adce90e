"""
Dense float64 tensors with reverse-mode differentiation.

Each operation records its parents and a closure that pushes the output
gradient back to them; `Tensor.backward` walks the graph in reverse
topological order.
"""

import math
import threading
from contextlib import contextmanager
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import erf

ArrayLike = Union[np.ndarray, float, int, Sequence]

_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    """Build no backward graph inside the block (per thread)."""
    previous = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = previous


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A float64 array that may take part in a backward graph."""

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        parents: Tuple["Tensor", ...] = (),
        backward: Optional[Callable[[np.ndarray], None]] = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._parents = parents
        self._backward = backward

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # ------------------------------------------------------------------
    # basics
    # ------------------------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, grad: np.ndarray) -> None:
        if not self.requires_grad:
            return
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != self.shape:
            grad = _unbroadcast(grad, self.shape).reshape(self.shape)
        self.grad = grad.copy() if self.grad is None else self.grad + grad

    @staticmethod
    def _result(data: np.ndarray, parents: Tuple["Tensor", ...], backward: Callable) -> "Tensor":
        needs = grad_enabled() and any(p.requires_grad for p in parents)
        if not needs:
            return Tensor(data)
        return Tensor(data, requires_grad=True, parents=parents, backward=backward)

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """Accumulate gradients into every tensor this one depends on."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)

        order: List[Tensor] = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))

        self.grad = np.asarray(grad, dtype=np.float64) if self.grad is None else self.grad + grad
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # ------------------------------------------------------------------
    # elementwise arithmetic
    # ------------------------------------------------------------------

    def __add__(self, other: ArrayLike) -> "Tensor":
        other = as_tensor(other)

        def backward(g):
            self._accumulate(g)
            other._accumulate(g)

        return Tensor._result(self.data + other.data, (self, other), backward)

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        return Tensor._result(-self.data, (self,), lambda g: self._accumulate(-g))

    def __sub__(self, other: ArrayLike) -> "Tensor":
        other = as_tensor(other)

        def backward(g):
            self._accumulate(g)
            other._accumulate(-g)

        return Tensor._result(self.data - other.data, (self, other), backward)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return as_tensor(other) - self

    def __mul__(self, other: ArrayLike) -> "Tensor":
        other = as_tensor(other)

        def backward(g):
            self._accumulate(g * other.data)
            other._accumulate(g * self.data)

        return Tensor._result(self.data * other.data, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        other = as_tensor(other)

        def backward(g):
            self._accumulate(g / other.data)
            other._accumulate(-g * self.data / other.data ** 2)

        return Tensor._result(self.data / other.data, (self, other), backward)

    def __rtruediv__(self, other: ArrayLike) -> "Tensor":
        return as_tensor(other) / self

    def __pow__(self, exponent: float) -> "Tensor":
        out = self.data ** exponent

        def backward(g):
            self._accumulate(g * exponent * self.data ** (exponent - 1))

        return Tensor._result(out, (self,), backward)

    def exp(self) -> "Tensor":
        out = np.exp(self.data)
        return Tensor._result(out, (self,), lambda g: self._accumulate(g * out))

    def log(self) -> "Tensor":
        return Tensor._result(np.log(self.data), (self,), lambda g: self._accumulate(g / self.data))

    def gelu(self) -> "Tensor":
        """Exact GELU, x * Phi(x)."""
        x = self.data
        cdf = 0.5 * (1.0 + erf(x / math.sqrt(2.0)))
        pdf = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        return Tensor._result(x * cdf, (self,), lambda g: self._accumulate(g * (cdf + x * pdf)))

    # ------------------------------------------------------------------
    # reductions and shape
    # ------------------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        out = self.data.sum(axis=axis, keepdims=keepdims)

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, self.shape))

        return Tensor._result(out, (self,), backward)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        count = self.data.size if axis is None else np.prod([self.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        original = self.shape
        return Tensor._result(
            self.data.reshape(shape), (self,), lambda g: self._accumulate(g.reshape(original))
        )

    def transpose(self, *axes) -> "Tensor":
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        inverse = np.argsort(axes)
        return Tensor._result(
            self.data.transpose(axes), (self,), lambda g: self._accumulate(g.transpose(inverse))
        )

    def swapaxes(self, a: int, b: int) -> "Tensor":
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return self.transpose(*axes)

    def __getitem__(self, index) -> "Tensor":
        out = self.data[index]

        def backward(g):
            full = np.zeros_like(self.data)
            np.add.at(full, index, g)
            self._accumulate(full)

        return Tensor._result(out, (self,), backward)

    # ------------------------------------------------------------------
    # linear algebra and normalization
    # ------------------------------------------------------------------

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        other = as_tensor(other)
        a, b = self.data, other.data

        def backward(g):
            self._accumulate(_unbroadcast(g @ np.swapaxes(b, -1, -2), a.shape))
            other._accumulate(_unbroadcast(np.swapaxes(a, -1, -2) @ g, b.shape))

        return Tensor._result(a @ b, (self, other), backward)

    def softmax(self, axis: int = -1) -> "Tensor":
        shifted = self.data - self.data.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        out = e / e.sum(axis=axis, keepdims=True)

        def backward(g):
            self._accumulate(out * (g - (g * out).sum(axis=axis, keepdims=True)))

        return Tensor._result(out, (self,), backward)


def as_tensor(value: ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, part in zip(tensors, np.split(g, splits, axis=axis)):
            t._accumulate(part)

    return Tensor._result(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def backward(g):
        for i, t in enumerate(tensors):
            t._accumulate(np.take(g, i, axis=axis))

    return Tensor._result(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), backward)


def where(condition: np.ndarray, a: ArrayLike, b: ArrayLike) -> Tensor:
    """Elementwise select; `condition` is a constant boolean array."""
    a, b = as_tensor(a), as_tensor(b)
    condition = np.asarray(condition, dtype=bool)

    def backward(g):
        a._accumulate(np.where(condition, g, 0.0))
        b._accumulate(np.where(condition, 0.0, g))

    return Tensor._result(np.where(condition, a.data, b.data), (a, b), backward)


def one_hot(labels: np.ndarray, classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros(labels.shape + (classes,))
    np.put_along_axis(out, labels[..., None], 1.0, axis=-1)
    return out


def softmax_xent(logits: Tensor, labels: np.ndarray) -> Tensor:
    """
    Mean negative log-softmax at the label indices.

    Args:
        logits: (N, C) scores
        labels: (N,) integer classes in [0, C)

    Returns:
        Scalar tensor
    """
    labels = np.asarray(labels, dtype=np.int64)
    z = logits.data
    if z.ndim != 2 or labels.shape != (z.shape[0],):
        raise ValueError(f"softmax_xent expects (N, C) logits and (N,) labels, got {z.shape} and {labels.shape}")
    if np.any((labels < 0) | (labels >= z.shape[1])):
        raise ValueError("label outside the class range")

    m = z.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(z - m).sum(axis=1))
    rows = np.arange(len(labels))
    loss = float(np.mean(lse - z[rows, labels]))

    def backward(g):
        p = np.exp(z - lse[:, None])
        p[rows, labels] -= 1.0
        logits._accumulate(g * p / len(labels))

    return Tensor._result(np.asarray(loss), (logits,), backward)


def pos_encode_1d(T: int, d: int) -> np.ndarray:
    """Interleaved sine/cosine encoding of positions 0..T-1 over geometric wavelengths."""
    if d % 2:
        raise ValueError("pos_encode_1d needs an even width")
    position = np.arange(T, dtype=np.float64)[:, None]
    div = np.exp(np.arange(0, d, 2, dtype=np.float64) * (-math.log(10000.0) / d))
    pe = np.zeros((T, d))
    pe[:, 0::2] = np.sin(position * div)
    pe[:, 1::2] = np.cos(position * div)
    return pe


def pos_encode_2d(W: int, L: int, d: int) -> np.ndarray:
    """Axis-split 2D encoding: first half encodes the row index, second half the column index."""
    if d % 4:
        raise ValueError("pos_encode_2d needs a width divisible by 4")
    half = d // 2
    rows = pos_encode_1d(W, half)
    cols = pos_encode_1d(L, half)
    return np.concatenate(
        [np.broadcast_to(rows[:, None, :], (W, L, half)), np.broadcast_to(cols[None, :, :], (W, L, half))],
        axis=-1,
    )


def encodings_distinct(pe: np.ndarray) -> bool:
    """Whether every cell of a (..., d) encoding carries a different vector."""
    flat = pe.reshape(-1, pe.shape[-1])
    return np.unique(flat, axis=0).shape[0] == flat.shape[0]


def gradient_check(
    loss_fn: Callable[[], Tensor],
    tensors: Dict[str, Tensor],
    eps: float = 1e-5,
) -> Dict[str, float]:
    """
    Compare backward gradients with central finite differences.

    Args:
        loss_fn: Rebuilds the scalar loss from the current tensor values
        tensors: Named tensors to perturb (must require grad)
        eps: Finite-difference step

    Returns:
        Name -> relative error ||analytic - numeric|| / (||analytic|| + ||numeric||)
    """
    for t in tensors.values():
        t.zero_grad()
    loss_fn().backward()
    analytic = {name: np.zeros_like(t.data) if t.grad is None else t.grad.copy() for name, t in tensors.items()}

    errors = {}
    with no_grad():
        for name, t in tensors.items():
            numeric = np.zeros_like(t.data)
            flat = t.data.reshape(-1)
            out = numeric.reshape(-1)
            for i in range(flat.size):
                original = flat[i]
                flat[i] = original + eps
                up = loss_fn().item()
                flat[i] = original - eps
                down = loss_fn().item()
                flat[i] = original
                out[i] = (up - down) / (2.0 * eps)
            denom = np.linalg.norm(analytic[name]) + np.linalg.norm(numeric)
            errors[name] = 0.0 if denom == 0 else float(np.linalg.norm(analytic[name] - numeric) / denom)
    return errors
