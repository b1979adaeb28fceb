"""
Dense tensors with reverse-mode differentiation.

A :class:`Tensor` wraps a NumPy array. Primitive operations executed while a
:class:`Graph` is active are recorded on that graph together with a closure
that maps the output adjoint to input adjoints; :meth:`Graph.backward` replays
the record in reverse. With no active graph nothing is recorded, which is the
inference mode.
"""

from __future__ import annotations

import logging
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Any, Callable, ClassVar, Iterator, Optional, Sequence

import numpy as np

from src.common.exceptions import ConfigurationError, NumericError

logger = logging.getLogger(__name__)

SUPPORTED_DTYPES = (np.float32, np.float64)

_default_dtype: list[type] = [np.float32]


def get_default_dtype() -> type:
    return _default_dtype[-1]


@contextmanager
def default_dtype(dtype: Any) -> Iterator[None]:
    """Switch the element type of newly created tensors inside the block."""
    resolved = np.dtype(dtype).type
    if resolved not in SUPPORTED_DTYPES:
        raise ConfigurationError(
            f'Unsupported element type {np.dtype(dtype).name}', key='dtype'
        )
    _default_dtype.append(resolved)
    try:
        yield
    finally:
        _default_dtype.pop()


Backward = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass(eq=False)
class Node:
    """One executed primitive: inputs, output and its adjoint rule."""

    op: str
    inputs: tuple['Tensor', ...]
    output: 'Tensor'
    backward: Backward


class Graph:
    """
    Ordered record of executed primitives.

    Usage::

        with Graph() as graph:
            loss = model_loss(...)
            graph.backward(loss)
    """

    _stack: ClassVar[list['Graph']] = []

    def __init__(self):
        self.nodes: list[Node] = []
        self.visited = 0

    def __enter__(self) -> 'Graph':
        Graph._stack.append(self)
        return self

    def __exit__(self, *exc_info: Any) -> None:
        Graph._stack.remove(self)

    @classmethod
    def current(cls) -> Optional['Graph']:
        return cls._stack[-1] if cls._stack else None

    def record(self, node: Node) -> None:
        self.nodes.append(node)

    def backward(
        self, loss: 'Tensor', grad: Optional[np.ndarray] = None
    ) -> None:
        """Populate ``.grad`` on every tensor reachable from ``loss``."""
        if grad is None:
            if loss.data.size != 1:
                raise ConfigurationError(
                    'grad must be provided for non-scalar outputs',
                    shape=loss.shape,
                )
            grad = np.ones_like(loss.data)
        loss.grad = np.asarray(grad, dtype=loss.data.dtype)

        self.visited = 0
        for node in reversed(self.nodes):
            out_grad = node.output.grad
            if out_grad is None:
                continue
            self.visited += 1
            input_grads = node.backward(out_grad)
            for tensor, g in zip(node.inputs, input_grads):
                if g is None or not tensor.requires_grad:
                    continue
                tensor.grad = g if tensor.grad is None else tensor.grad + g


def _unbroadcast(g: np.ndarray, target_shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == target_shape:
        return g
    while g.ndim > len(target_shape):
        g = g.sum(axis=0)
    for i, (gs, ts) in enumerate(zip(g.shape, target_shape)):
        if ts == 1 and gs != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _reduced_count(shape: tuple[int, ...], axis: Any) -> int:
    if axis is None:
        return int(np.prod(shape, dtype=np.int64))
    axes = axis if isinstance(axis, tuple) else (axis,)
    return int(np.prod([shape[a] for a in axes], dtype=np.int64))


def _is_basic_index(index: Any) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(
        isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis
        for i in items
    )


class Tensor:
    """A dense array node. Values are never mutated by operations."""

    __slots__ = ('data', 'grad', 'requires_grad', 'name')

    # Make NumPy defer to the reflected operators below
    __array_ufunc__ = None

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        name: Optional[str] = None,
        dtype: Any = None,
    ):
        if dtype is None:
            if isinstance(data, np.ndarray) and data.dtype.type in (
                SUPPORTED_DTYPES
            ):
                dtype = data.dtype
            else:
                dtype = get_default_dtype()
        self.data: np.ndarray = np.asarray(data, dtype=dtype)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.name = name

    # --- convenience ---
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def __repr__(self) -> str:
        req = ', requires_grad=True' if self.requires_grad else ''
        nm = f', name={self.name}' if self.name else ''
        return f'Tensor(shape={self.shape}, dtype={self.dtype.name}{req}{nm})'

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> 'Tensor':
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def _lift(self, other: Any) -> 'Tensor':
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.data.dtype))

    # --- elementwise arithmetic ---
    def __add__(self, other: Any) -> 'Tensor':
        other = self._lift(other)
        a_shape, b_shape = self.shape, other.shape
        return make_result(
            self.data + other.data,
            'add',
            (self, other),
            lambda g: (_unbroadcast(g, a_shape), _unbroadcast(g, b_shape)),
        )

    def __radd__(self, other: Any) -> 'Tensor':
        return self._lift(other).__add__(self)

    def __sub__(self, other: Any) -> 'Tensor':
        other = self._lift(other)
        a_shape, b_shape = self.shape, other.shape
        return make_result(
            self.data - other.data,
            'sub',
            (self, other),
            lambda g: (_unbroadcast(g, a_shape), _unbroadcast(-g, b_shape)),
        )

    def __rsub__(self, other: Any) -> 'Tensor':
        return self._lift(other).__sub__(self)

    def __mul__(self, other: Any) -> 'Tensor':
        other = self._lift(other)
        a, b = self.data, other.data
        return make_result(
            a * b,
            'mul',
            (self, other),
            lambda g: (
                _unbroadcast(g * b, a.shape),
                _unbroadcast(g * a, b.shape),
            ),
        )

    def __rmul__(self, other: Any) -> 'Tensor':
        return self._lift(other).__mul__(self)

    def __truediv__(self, other: Any) -> 'Tensor':
        other = self._lift(other)
        a, b = self.data, other.data
        return make_result(
            a / b,
            'div',
            (self, other),
            lambda g: (
                _unbroadcast(g / b, a.shape),
                _unbroadcast(-g * a / (b * b), b.shape),
            ),
        )

    def __rtruediv__(self, other: Any) -> 'Tensor':
        return self._lift(other).__truediv__(self)

    def __neg__(self) -> 'Tensor':
        return make_result(-self.data, 'neg', (self,), lambda g: (-g,))

    # --- linear algebra ---
    def __matmul__(self, other: 'Tensor') -> 'Tensor':
        a, b = self.data, other.data
        if a.ndim < 2 or b.ndim < 2:
            raise ConfigurationError(
                'matmul operands must have at least two axes',
                shapes=(a.shape, b.shape),
            )

        def backward(g: np.ndarray):
            ga = g @ np.swapaxes(b, -1, -2)
            gb = np.swapaxes(a, -1, -2) @ g
            return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

        return make_result(a @ b, 'matmul', (self, other), backward)

    # --- movement ---
    def reshape(self, *shape: Any) -> 'Tensor':
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src_shape = self.shape
        return make_result(
            self.data.reshape(shape),
            'reshape',
            (self,),
            lambda g: (g.reshape(src_shape),),
        )

    def transpose(self, *axes: int) -> 'Tensor':
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        inverse = tuple(np.argsort(axes))
        return make_result(
            np.transpose(self.data, axes),
            'transpose',
            (self,),
            lambda g: (np.transpose(g, inverse),),
        )

    def swapaxes(self, a: int, b: int) -> 'Tensor':
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return self.transpose(tuple(axes))

    def __getitem__(self, index: Any) -> 'Tensor':
        src_shape, dtype = self.shape, self.data.dtype
        basic = _is_basic_index(index)

        def backward(g: np.ndarray):
            full = np.zeros(src_shape, dtype=dtype)
            if basic:
                full[index] = g
            else:
                np.add.at(full, index, g)
            return (full,)

        return make_result(self.data[index], 'slice', (self,), backward)

    # --- reductions ---
    def sum(self, axis: Any = None, keepdims: bool = False) -> 'Tensor':
        src_shape = self.shape

        def backward(g: np.ndarray):
            if not keepdims and axis is not None:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, src_shape).copy(),)

        return make_result(
            self.data.sum(axis=axis, keepdims=keepdims),
            'sum',
            (self,),
            backward,
        )

    def mean(self, axis: Any = None, keepdims: bool = False) -> 'Tensor':
        src_shape = self.shape
        count = _reduced_count(src_shape, axis)

        def backward(g: np.ndarray):
            if not keepdims and axis is not None:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g / count, src_shape).copy(),)

        return make_result(
            self.data.mean(axis=axis, keepdims=keepdims),
            'mean',
            (self,),
            backward,
        )

    def var(self, axis: Any = None, keepdims: bool = False) -> 'Tensor':
        """Population variance (divides by the element count)."""
        x = self.data
        mu = x.mean(axis=axis, keepdims=True)
        count = _reduced_count(x.shape, axis)

        def backward(g: np.ndarray):
            if not keepdims and axis is not None:
                g = np.expand_dims(g, axis)
            return (g * 2.0 * (x - mu) / count,)

        return make_result(
            x.var(axis=axis, keepdims=keepdims), 'var', (self,), backward
        )


def make_result(
    data: np.ndarray,
    op: str,
    inputs: tuple[Tensor, ...],
    backward: Backward,
) -> Tensor:
    """Wrap a primitive's output and record it on the active graph."""
    graph = Graph.current()
    needs_grad = graph is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs_grad, dtype=data.dtype)
    if needs_grad:
        graph.record(Node(op, inputs, out, backward))
    return out


def check_finite(data: np.ndarray, op: str) -> None:
    """Raise :class:`NumericError` carrying the first non-finite index."""
    finite = np.isfinite(data)
    if not finite.all():
        index = tuple(int(i) for i in np.argwhere(~finite)[0])
        raise NumericError(
            f'Non-finite value in {op} input', op=op, index=index
        )


def as_tensor(value: Any, like: Optional[Tensor] = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else get_default_dtype()
    return Tensor(np.asarray(value, dtype=dtype))
