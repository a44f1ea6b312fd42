"""Dense float64 tensors with reverse-mode automatic differentiation.

Values are plain numpy arrays wrapped in a :class:`Tensor`. Operations
executed while a :class:`GradientTape` is active record their gradient
rules; :func:`backward` replays the tape in reverse to fill ``grad``
buffers. Broadcasting is deliberately restricted to scalar-with-tensor
and equal shapes.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError, NonFiniteError, ShapeError

# Guard applied before log so probabilities that underflow stay finite.
EPS_CLAMP = 1e-7

_TAPE_STACK: list["GradientTape"] = []


class Tensor:
    """An n-dimensional float64 value with an optional gradient buffer."""

    __slots__ = ("data", "grad", "tape_id")

    def __init__(self, data):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("tensor constructed from non-finite data")
        self.data: np.ndarray = arr
        self.grad: Optional[np.ndarray] = None
        self.tape_id: Optional[int] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"

    # arithmetic sugar; all routed through the module-level ops
    def __add__(self, other):
        return add(self, _wrap(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __neg__(self):
        return mul(self, _wrap(-1.0))


class _Node:
    __slots__ = ("inputs", "output", "grad_fn")

    def __init__(self, inputs, output, grad_fn):
        self.inputs = inputs
        self.output = output
        self.grad_fn = grad_fn


class GradientTape:
    """Ordered record of operations; inputs always precede their consumers."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self) -> "GradientTape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _TAPE_STACK.pop()
        assert popped is self, "gradient tapes closed out of order"

    def _record(self, node: _Node) -> None:
        node.output.tape_id = len(self.nodes)
        self.nodes.append(node)


def _active_tape() -> Optional[GradientTape]:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(np.asarray(value, dtype=np.float64))


def _check_finite(arr: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{op} produced non-finite values")
    return arr


def _make(data: np.ndarray, op: str, inputs: Sequence[Tensor],
          grad_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]) -> Tensor:
    out = Tensor(_check_finite(np.ascontiguousarray(data, dtype=np.float64), op))
    tape = _active_tape()
    if tape is not None:
        tape._record(_Node(tuple(inputs), out, grad_fn))
    return out


def custom_op(data: np.ndarray, inputs: Sequence[Tensor],
              grad_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]],
              name: str = "custom") -> Tensor:
    """Record an externally computed forward result with its gradient rule.

    ``grad_fn`` receives the gradient at the output and must return one
    gradient array (or None) per input, in order.
    """
    return _make(data, name, inputs, grad_fn)


def _binary_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape or a.size == 1 or b.size == 1:
        return
    raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} are neither equal nor scalar")


def _reduce_to(g: np.ndarray, shape: tuple) -> np.ndarray:
    # collapse a broadcast gradient back onto a scalar operand
    if g.shape == shape:
        return g
    return np.sum(g).reshape(shape)


def add(a: Tensor, b: Tensor) -> Tensor:
    _binary_shape(a, b, "add")
    return _make(a.data + b.data, "add", (a, b),
                 lambda g: (_reduce_to(g, a.shape), _reduce_to(g, b.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _binary_shape(a, b, "sub")
    return _make(a.data - b.data, "sub", (a, b),
                 lambda g: (_reduce_to(g, a.shape), _reduce_to(-g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _binary_shape(a, b, "mul")
    return _make(a.data * b.data, "mul", (a, b),
                 lambda g: (_reduce_to(g * b.data, a.shape), _reduce_to(g * a.data, b.shape)))


def div(a: Tensor, b: Tensor) -> Tensor:
    _binary_shape(a, b, "div")
    if np.any(b.data <= 0.0):
        raise DomainError(f"div: denominator has non-positive entries (min {b.data.min()})")
    return _make(a.data / b.data, "div", (a, b),
                 lambda g: (_reduce_to(g / b.data, a.shape),
                            _reduce_to(-g * a.data / (b.data * b.data), b.shape)))


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out_data = np.exp(a.data)
    return _make(out_data, "exp", (a,), lambda g: (g * out_data,))


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0.0):
        raise DomainError(f"log: argument has non-positive entries (min {a.data.min()}); "
                          f"clamp first")
    return _make(np.log(a.data), "log", (a,), lambda g: (g / a.data,))


def relu(a: Tensor) -> Tensor:
    keep = a.data > 0.0
    return _make(np.where(keep, a.data, 0.0), "relu", (a,), lambda g: (g * keep,))


def clamp(a: Tensor, lo: float = EPS_CLAMP, hi: float = 1.0) -> Tensor:
    """Clip into [lo, hi]; the default range is the guard used before log."""
    inside = (a.data >= lo) & (a.data <= hi)
    return _make(np.clip(a.data, lo, hi), "clamp", (a,), lambda g: (g * inside,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul needs 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} vs {b.shape}")
    return _make(a.data @ b.data, "matmul", (a, b),
                 lambda g: (g @ b.data.T, a.data.T @ g))


def softmax(logits: Tensor) -> Tensor:
    """Row-wise softmax over a (batch, classes) tensor, max-shifted for stability."""
    if logits.data.ndim != 2:
        raise ShapeError(f"softmax needs a 2-d tensor, got {logits.shape}")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)

    def grad_fn(g):
        inner = (g * p).sum(axis=1, keepdims=True)
        return (p * (g - inner),)

    return _make(p, "softmax", (logits,), grad_fn)


def sum_all(a: Tensor) -> Tensor:
    return _make(np.asarray(a.data.sum()), "sum", (a,),
                 lambda g: (np.broadcast_to(g, a.shape).copy(),))


def mean_all(a: Tensor) -> Tensor:
    return mul(sum_all(a), _wrap(1.0 / a.size))


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Add a length-n bias row to every row of a (m, n) matrix."""
    if x.data.ndim != 2 or b.data.ndim != 1 or x.shape[1] != b.shape[0]:
        raise ShapeError(f"add_bias: got matrix {x.shape} and bias {b.shape}")
    return _make(x.data + b.data[None, :], "add_bias", (x, b),
                 lambda g: (g, g.sum(axis=0)))


def reshape(a: Tensor, shape) -> Tensor:
    return _make(a.data.reshape(shape), "reshape", (a,),
                 lambda g: (g.reshape(a.shape),))


def backward(loss: Tensor, tape: GradientTape) -> None:
    """Propagate d(loss)/d(x) to every tensor on the tape.

    Gradients accumulate into ``.grad``; zero buffers first if a fresh
    gradient is wanted. Each tape node is visited exactly once.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    loss.grad = np.ones_like(loss.data) if loss.grad is None \
        else loss.grad + np.ones_like(loss.data)
    seen: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        out_grad = seen.get(id(node.output))
        if out_grad is None:
            continue
        for tensor, g in zip(node.inputs, node.grad_fn(out_grad)):
            if g is None:
                continue
            g = np.ascontiguousarray(g, dtype=np.float64)
            if id(tensor) in seen:
                seen[id(tensor)] += g
            else:
                seen[id(tensor)] = g.copy()
            if tensor.grad is None:
                tensor.grad = g.copy()
            else:
                tensor.grad += g
