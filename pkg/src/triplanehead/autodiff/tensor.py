"""Dense float64 tensors with a define-by-run gradient tape.

Every op that touches a tensor with ``requires_grad`` records a :class:`Node`
on its output. :func:`backward` collects the nodes reachable from a scalar
loss into a :class:`Graph`, replays them in exact reverse execution order and
accumulates gradients into the leaf tensors.
"""

from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

_state = threading.local()
_seq = itertools.count()


def is_grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording in the current thread."""
    prev = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class ShapeError(ValueError):
    """Operand shapes do not conform for an op."""


@dataclass
class Node:
    op: str
    parents: tuple["Tensor", ...]
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]
    seq: int


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_node", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._node: Node | None = None
        self.name = name

    # -- introspection -------------------------------------------------
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
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    # -- operator sugar; implementations live in ops ---------------------
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.getitem(self, index)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def record(op: str, data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    """Wrap ``data`` as an op output, attaching a node when any parent needs grad."""
    out = Tensor(data)
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._node = Node(op, tuple(parents), backward, next(_seq))
    return out


class Graph:
    """Executed ops reachable from one output, in execution order."""

    def __init__(self, root: Tensor):
        seen: set[int] = set()
        found: list[Tensor] = []
        stack = [root]
        while stack:
            t = stack.pop()
            if id(t) in seen or t._node is None:
                continue
            seen.add(id(t))
            found.append(t)
            stack.extend(t._node.parents)
        found.sort(key=lambda t: t._node.seq)
        self.outputs = found

    def __len__(self) -> int:
        return len(self.outputs)

    def ops(self) -> list[str]:
        return [t._node.op for t in self.outputs]

    def clear(self) -> None:
        for t in self.outputs:
            t._node = None
        self.outputs = []


def backward(loss: Tensor, retain_graph: bool = False) -> None:
    """Populate ``.grad`` on every leaf with ``requires_grad`` that feeds ``loss``.

    Gradients accumulate; the graph is dropped afterwards unless
    ``retain_graph`` is set.
    """
    if loss.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    if loss._node is None:
        raise RuntimeError("backward: loss has no recorded graph")
    graph = Graph(loss)
    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    # leaf grads are summed locally first so repeated passes accumulate exactly
    leaf_grads: dict[int, tuple[Tensor, np.ndarray]] = {}
    for t in reversed(graph.outputs):
        g = pending.pop(id(t), None)
        if g is None:
            continue
        for parent, pg in zip(t._node.parents, t._node.backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            if parent._node is None:
                key = id(parent)
                prev = leaf_grads.get(key)
                leaf_grads[key] = (parent, pg if prev is None else prev[1] + pg)
            else:
                key = id(parent)
                pending[key] = pg if key not in pending else pending[key] + pg
    for leaf, g in leaf_grads.values():
        leaf.grad = np.array(g, copy=True) if leaf.grad is None else leaf.grad + g
    if not retain_graph:
        graph.clear()
