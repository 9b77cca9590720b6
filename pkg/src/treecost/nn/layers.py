"""Tape ops: dense layers, embedding lookup, tree propagation, reductions.

Each function runs its forward through the selected kernel backend and
registers a backward closure on the returned Tensor. Inputs are float64;
1-d dense inputs are treated as a single row and the output rank matches.
"""

from __future__ import annotations

import numpy as np

from .. import kernels
from .tensor import Parameter, Tensor

_ACTIVATIONS = ("relu", "none")


def _needs_grad(t: Tensor) -> bool:
    return isinstance(t, Parameter) or t.backward_fn is not None or any(
        _needs_grad(p) for p in t.parents)


def dense_forward(input: Tensor, weights: Parameter, bias: Parameter,
                  activation: str = "relu") -> Tensor:
    """act(input @ W + b) with act in {relu, none}."""
    if activation not in _ACTIVATIONS:
        raise ValueError(f"activation must be one of {_ACTIVATIONS}, got {activation!r}")
    relu = activation == "relu"
    x = input.data
    one_row = x.ndim == 1
    x2 = x.reshape(1, -1) if one_row else x
    if x2.ndim != 2 or weights.data.ndim != 2 or x2.shape[1] != weights.data.shape[0]:
        raise ValueError(
            f"dense_forward: input {x.shape} incompatible with weights {weights.data.shape}")
    if bias.data.shape != (weights.data.shape[1],):
        raise ValueError(
            f"dense_forward: bias {bias.data.shape} incompatible with weights {weights.data.shape}")
    x2 = np.ascontiguousarray(x2)
    out2 = kernels.dense_fwd(x2, weights.data, bias.data, relu)
    need_dx = _needs_grad(input)

    def backward_fn(grad):
        g2 = np.ascontiguousarray(grad.reshape(out2.shape))
        dx, dw, db = kernels.dense_bwd(x2, weights.data, out2, g2, relu, need_dx)
        if dx is not None and one_row:
            dx = dx.reshape(-1)
        return dx, dw, db

    out = out2[0] if one_row else out2
    return Tensor(out, (input, weights, bias), backward_fn)


def embedding_lookup(table: Parameter, ids) -> Tensor:
    """Row gather; the gradient scatter-adds into the looked-up rows."""
    ids = np.ascontiguousarray(np.asarray(ids, dtype=np.int64).reshape(-1))
    v = table.data.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= v):
        raise IndexError(f"embedding id out of range [0, {v})")
    if ids.size == 0:
        rows = np.zeros((0, table.data.shape[1]))
    else:
        rows = kernels.embed_fwd(table.data, ids)

    def backward_fn(grad):
        d_table = np.zeros_like(table.data)
        if ids.size:
            kernels.embed_bwd(d_table, ids, np.ascontiguousarray(grad))
        return (d_table,)

    return Tensor(rows, (table,), backward_fn)


def tree_round(states: Tensor, w_self: Parameter, w_msg: Parameter, b: Parameter,
               order: np.ndarray, parent: np.ndarray) -> Tensor:
    """One top-down propagation round over a tree (see kernels.tree_fwd)."""
    x = states.data
    if x.ndim != 2 or x.shape[1] != w_self.data.shape[0]:
        raise ValueError(
            f"tree_round: states {x.shape} incompatible with w_self {w_self.data.shape}")
    h = kernels.tree_fwd(order, parent, x, w_self.data, w_msg.data, b.data)

    def backward_fn(grad):
        d_h = np.ascontiguousarray(grad).copy()  # tree_bwd consumes its grad buffer
        return kernels.tree_bwd(order, parent, x, w_self.data, w_msg.data, h, d_h)

    return Tensor(h, (states, w_self, w_msg, b), backward_fn)


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    """Column-wise concatenation of two row-aligned matrices."""
    if a.data.shape[0] != b.data.shape[0]:
        raise ValueError(f"concat_cols: row counts differ ({a.data.shape} vs {b.data.shape})")
    da = a.data.shape[1]
    out = np.concatenate([a.data, b.data], axis=1)

    def backward_fn(grad):
        return (np.ascontiguousarray(grad[:, :da]), np.ascontiguousarray(grad[:, da:]))

    return Tensor(out, (a, b), backward_fn)


def mean_rows(x: Tensor) -> Tensor:
    """Column-wise mean over rows: (n, k) -> (k,)."""
    n = x.data.shape[0]
    if n == 0:
        raise ValueError("mean_rows: empty input")
    out = x.data.mean(axis=0)

    def backward_fn(grad):
        return (np.repeat((grad / n)[None, :], n, axis=0),)

    return Tensor(out, (x,), backward_fn)


def stack_rows(tensors: list[Tensor]) -> Tensor:
    """Stack (k,) vectors into a (B, k) matrix."""
    out = np.stack([t.data for t in tensors], axis=0)

    def backward_fn(grad):
        return tuple(grad[i] for i in range(len(tensors)))

    return Tensor(out, tuple(tensors), backward_fn)


def squeeze_cols(x: Tensor) -> Tensor:
    """(B, 1) -> (B,)."""
    if x.data.ndim != 2 or x.data.shape[1] != 1:
        raise ValueError(f"squeeze_cols expects (B, 1), got {x.data.shape}")
    out = x.data[:, 0].copy()

    def backward_fn(grad):
        return (np.ascontiguousarray(grad[:, None]),)

    return Tensor(out, (x,), backward_fn)


def sum_all(x: Tensor) -> Tensor:
    """Scalar sum of all entries."""
    out = np.asarray(x.data.sum())

    def backward_fn(grad):
        return (np.full_like(x.data, float(grad)),)

    return Tensor(out, (x,), backward_fn)
