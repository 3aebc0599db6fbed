"""
Dense float64 tensors with reverse-mode automatic differentiation.

Every differentiable operation creates an output tensor that remembers its
parents and a closure propagating the output gradient back to them. Calling
``backward()`` on a scalar root walks the recorded graph in reverse
topological order.
"""
from contextlib import contextmanager
from contextvars import ContextVar
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..core.config import settings
from ..core.exceptions import GraphError, NonFiniteError, ShapeError

ArrayLike = Union[np.ndarray, float, int, Sequence]

# Context-local so frozen models can be evaluated from several threads.
_grad_enabled: ContextVar[bool] = ContextVar("grad_enabled", default=True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def is_grad_enabled() -> bool:
    return _grad_enabled.get()


def check_finite(values: np.ndarray, name: str) -> None:
    if not np.isfinite(values).all():
        raise NonFiniteError(f"{name} contains NaN or Inf", parameter=name)


class Tensor:
    """A float64 array with an optional gradient slot."""

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        name: Optional[str] = None,
        _parents: Tuple["Tensor", ...] = (),
        _op: str = "",
    ):
        self.data = np.asarray(data, dtype=np.float64)
        if any(extent < 1 for extent in self.data.shape):
            raise ShapeError(f"Tensor extents must be positive, got {self.data.shape}")
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._parents = _parents
        self._op = _op
        self._backward: Optional[Callable[[], None]] = None
        self._graph_consumed = False

    # ------------------------------------------------------------------ basics
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, tensor has shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        label = self.name or self._op or "leaf"
        return f"Tensor({label}, shape={self.shape}, requires_grad={self.requires_grad})"

    def accumulate_grad(self, grad: np.ndarray) -> None:
        if grad.shape != self.data.shape:
            raise ShapeError(
                f"Gradient shape {grad.shape} does not match tensor shape {self.data.shape}"
            )
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad += grad

    @classmethod
    def from_op(
        cls,
        data: np.ndarray,
        parents: Tuple["Tensor", ...],
        op: str,
        backward: Callable[["Tensor"], None],
    ) -> "Tensor":
        """Wrap an op result and, when needed, record how to differentiate it."""
        if settings.CHECK_FINITE:
            check_finite(data, op)
        needs_grad = is_grad_enabled() and any(p.requires_grad for p in parents)
        out = cls(data, requires_grad=needs_grad, _parents=parents if needs_grad else (), _op=op)
        if needs_grad:
            out._backward = lambda: backward(out)
        return out

    # -------------------------------------------------------------- autodiff
    def _topological_order(self) -> List["Tensor"]:
        order: List[Tensor] = []
        state = {}  # id -> 1 visiting, 2 done
        stack: List[Tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            key = id(node)
            if expanded:
                state[key] = 2
                order.append(node)
                continue
            if state.get(key) == 2:
                continue
            if state.get(key) == 1:
                raise GraphError(f"Cycle detected at {node!r}")
            state[key] = 1
            stack.append((node, True))
            for parent in node._parents:
                if parent is None:
                    raise GraphError(f"Missing parent node under {node!r}")
                if state.get(id(parent)) == 1:
                    raise GraphError(f"Cycle detected at {parent!r}")
                if state.get(id(parent)) != 2 and parent.requires_grad:
                    stack.append((parent, False))
        return order

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf with requires_grad."""
        if self.data.size != 1:
            raise GraphError(f"backward() needs a scalar root, got shape {self.shape}")
        if not self.requires_grad:
            raise GraphError("backward() called on a tensor that does not require grad")
        if self._graph_consumed:
            raise GraphError("backward() already ran on this graph; call zero_grad() first")

        order = self._topological_order()
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._parents:
                if node._backward is None:
                    raise GraphError(f"Node {node!r} has parents but no backward rule")
                if node.grad is not None:
                    node._backward()
        self._graph_consumed = True

        if settings.CHECK_FINITE:
            for node in order:
                if not node._parents and node.grad is not None:
                    check_finite(node.grad, f"grad[{node.name or node._op or 'leaf'}]")

    def zero_grad(self) -> None:
        """Clear gradients on this tensor and everything it was computed from."""
        self.grad = None
        self._graph_consumed = False
        if self._parents:
            for node in self._topological_order():
                node.grad = None
                node._graph_consumed = False

    # ------------------------------------------------------------ arithmetic
    def __add__(self, other: Union["Tensor", ArrayLike]) -> "Tensor":
        other = as_tensor(other)

        def backward(out: Tensor) -> None:
            if self.requires_grad:
                self.accumulate_grad(unbroadcast(out.grad, self.shape))
            if other.requires_grad:
                other.accumulate_grad(unbroadcast(out.grad, other.shape))

        return Tensor.from_op(self.data + other.data, (self, other), "add", backward)

    def __radd__(self, other: ArrayLike) -> "Tensor":
        return self + other

    def __neg__(self) -> "Tensor":
        return self * -1.0

    def __sub__(self, other: Union["Tensor", ArrayLike]) -> "Tensor":
        return self + (-as_tensor(other))

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return as_tensor(other) + (-self)

    def __mul__(self, other: Union["Tensor", ArrayLike]) -> "Tensor":
        other = as_tensor(other)

        def backward(out: Tensor) -> None:
            if self.requires_grad:
                self.accumulate_grad(unbroadcast(out.grad * other.data, self.shape))
            if other.requires_grad:
                other.accumulate_grad(unbroadcast(out.grad * self.data, other.shape))

        return Tensor.from_op(self.data * other.data, (self, other), "mul", backward)

    def __rmul__(self, other: ArrayLike) -> "Tensor":
        return self * other

    def sum(self) -> "Tensor":
        def backward(out: Tensor) -> None:
            self.accumulate_grad(np.broadcast_to(out.grad, self.shape).copy())

        return Tensor.from_op(np.array(self.data.sum()), (self,), "sum", backward)

    def reshape(self, *shape: int) -> "Tensor":
        def backward(out: Tensor) -> None:
            self.accumulate_grad(out.grad.reshape(self.shape))

        return Tensor.from_op(self.data.reshape(*shape), (self,), "reshape", backward)

    def tanh(self) -> "Tensor":
        values = np.tanh(self.data)

        def backward(out: Tensor) -> None:
            self.accumulate_grad(out.grad * (1.0 - values * values))

        return Tensor.from_op(values, (self,), "tanh", backward)


def as_tensor(value: Union[Tensor, ArrayLike]) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def parameter(data: ArrayLike, name: str) -> Tensor:
    """A named leaf that receives gradients."""
    return Tensor(data, requires_grad=True, name=name)


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    """Concatenate along ``axis``; gradients are split back to the inputs."""
    if not tensors:
        raise ShapeError("concat needs at least one tensor")
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(out: Tensor) -> None:
        for tensor, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if tensor.requires_grad:
                index = [slice(None)] * out.grad.ndim
                index[axis] = slice(lo, hi)
                tensor.accumulate_grad(out.grad[tuple(index)].copy())

    data = np.concatenate([t.data for t in tensors], axis=axis)
    return Tensor.from_op(data, tuple(tensors), "concat", backward)
