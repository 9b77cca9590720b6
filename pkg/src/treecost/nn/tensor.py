"""Dense float64 tensors with reverse-mode differentiation.

A ``Tensor`` records the op that produced it (parents + a backward closure);
``backward`` walks the tape in reverse topological order and accumulates
gradients into every reachable :class:`Parameter`. Ops are registered at the
layer level (dense, embedding, tree round, ...) in :mod:`treecost.nn.layers`,
so the tape stays short even for large models.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    """A dense array plus its position in the autodiff tape.

    ``backward_fn`` maps the output gradient to one gradient per parent
    (``None`` for parents that need no gradient).
    """

    __slots__ = ("data", "parents", "backward_fn")

    def __init__(self, data, parents=(), backward_fn=None):
        data = np.asarray(data, dtype=np.float64)
        if not data.flags["C_CONTIGUOUS"]:  # ascontiguousarray would promote 0-d to 1-d
            data = np.ascontiguousarray(data)
        self.data = data
        self.parents = tuple(parents)
        self.backward_fn = backward_fn

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"


class Parameter(Tensor):
    """A trainable leaf tensor with gradient and Adam accumulators."""

    __slots__ = ("grad", "adam_m", "adam_v", "step_count")

    def __init__(self, data):
        super().__init__(data)
        if not np.isfinite(self.data).all():
            raise ValueError("parameter initialized with non-finite values")
        self.grad = np.zeros_like(self.data)
        self.adam_m = np.zeros_like(self.data)
        self.adam_v = np.zeros_like(self.data)
        self.step_count = 0

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self):
        self.grad.fill(0.0)

    def __repr__(self):
        return f"Parameter(shape={self.data.shape}, steps={self.step_count})"


def _topo_sort(root: Tensor) -> list[Tensor]:
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order  # parents before consumers


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(param) into ``.grad`` of every reachable Parameter.

    Repeated calls without ``zero_grad`` keep accumulating. Gradients of
    intermediate tensors are transient (freed as the walk passes them).
    """
    if loss.data.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topo_sort(loss)):
        grad = grads.pop(id(node), None)
        if grad is None:
            continue
        if isinstance(node, Parameter):
            node.grad += grad
            continue
        if node.backward_fn is None:
            continue
        parent_grads = node.backward_fn(grad)
        for parent, pg in zip(node.parents, parent_grads):
            if pg is None:
                continue
            if isinstance(parent, Parameter):
                parent.grad += pg
            else:
                seen = grads.get(id(parent))
                grads[id(parent)] = pg if seen is None else seen + pg


def zero_grad(params) -> None:
    for p in params:
        p.zero_grad()
