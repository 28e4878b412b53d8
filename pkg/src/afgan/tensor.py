"""Dense tensors with reverse-mode differentiation."""

from __future__ import annotations

import contextlib
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

_GRAD_ENABLED = True


class GraphError(RuntimeError):
    """Raised for misuse of the autograd graph (non-scalar root, reuse)."""


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


@dataclass
class OpRecord:
    op: str
    inputs: tuple["Tensor", ...]
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tensor:
    """An n-dimensional float array with an optional gradient slot.

    ``float32`` is the default storage type; ``float64`` inputs are kept as
    ``float64`` so gradient checks can run at full precision.
    """

    __slots__ = ("data", "requires_grad", "grad", "_record", "_consumed")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if dtype is None and arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._record: OpRecord | None = None
        self._consumed = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError("item() needs a single-element tensor")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        tag = f", op={self._record.op}" if self._record else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag})"

    # small arithmetic surface, mostly for tests and losses
    def __add__(self, other):
        from afgan import ops

        return ops.add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        from afgan import ops

        return ops.mul(self, other)

    __rmul__ = __mul__

    def sum(self) -> "Tensor":
        from afgan import ops

        return ops.sum(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_result(
    data: np.ndarray,
    op: str,
    inputs: tuple[Tensor, ...],
    backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]],
) -> Tensor:
    """Wrap an op output, recording it in the graph when any input needs grads."""
    needs = _GRAD_ENABLED and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs, dtype=data.dtype)
    if needs:
        out._record = OpRecord(op, inputs, backward_fn)
    return out


class Graph:
    """Topologically ordered op records reachable from a root tensor."""

    def __init__(self, root: Tensor):
        self.root = root
        self.nodes: list[Tensor] = _topo_order(root)

    @property
    def records(self) -> list[OpRecord]:
        return [n._record for n in self.nodes if n._record is not None]

    def __len__(self) -> int:
        return len(self.nodes)


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        if node._record is not None:
            for parent in node._record.inputs:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
    return order


def backward(loss: Tensor) -> Graph:
    """Accumulate dLoss/dLeaf into ``.grad`` of every leaf that requires grad.

    The graph is consumed: saved activations are released and a second call
    on the same root raises :class:`GraphError`.
    """
    if loss.data.size != 1:
        raise GraphError(f"backward needs a scalar root, got shape {loss.shape}")
    if loss._consumed:
        raise GraphError("graph already consumed by a previous backward call")
    if not loss.requires_grad:
        raise GraphError("root does not depend on any tensor that requires grad")

    graph = Graph(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(graph.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        rec = node._record
        if rec is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(rec.inputs, rec.backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg
    for node in graph.nodes:
        node._record = None
    loss._consumed = True
    return graph
