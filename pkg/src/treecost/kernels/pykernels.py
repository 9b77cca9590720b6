"""Pure-Python (numpy) kernel implementations.

Fallback backend with the same contract as the compiled ``_ckernels``
extension: float64, C-contiguous arrays. The tree kernels are the only ones
with an unavoidable Python-level loop (the top-down recurrence is sequential
in the node order); everything batchable is delegated to BLAS.
"""

from __future__ import annotations

import numpy as np

NAME = "py"


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b


def dense_fwd(x: np.ndarray, w: np.ndarray, b: np.ndarray, relu: bool) -> np.ndarray:
    out = x @ w + b
    if relu:
        np.maximum(out, 0.0, out=out)
    return out


def dense_bwd(x, w, out, d_out, relu: bool, need_dx: bool = True):
    """Gradients of ``dense_fwd``; the relu mask is recovered from ``out``."""
    dz = d_out * (out > 0.0) if relu else d_out
    dw = x.T @ dz
    db = dz.sum(axis=0)
    dx = dz @ w.T if need_dx else None
    return dx, dw, db


def tree_fwd(order, parent, x, w_self, w_msg, b) -> np.ndarray:
    """One top-down round: h[v] = relu(x[v]·W_self + h[parent]·W_msg + b).

    ``order`` must put every parent before its children; updates cascade, so
    the root's new state reaches every leaf within the round. The root gets a
    zero message (parent == -1).
    """
    h = x @ w_self + b
    for v in order:
        p = parent[v]
        if p >= 0:
            h[v] += h[p] @ w_msg
        np.maximum(h[v], 0.0, out=h[v])
    return h


def tree_bwd(order, parent, x, w_self, w_msg, h, d_h):
    """Gradients of ``tree_fwd``. ``d_h`` is consumed (mutated in place)."""
    dz = np.zeros_like(h)
    for i in range(len(order) - 1, -1, -1):
        v = order[i]
        dz_v = d_h[v] * (h[v] > 0.0)
        dz[v] = dz_v
        p = parent[v]
        if p >= 0:
            d_h[p] += dz_v @ w_msg.T
    d_w_self = x.T @ dz
    db = dz.sum(axis=0)
    dx = dz @ w_self.T
    h_parents = np.zeros_like(h)
    non_root = parent >= 0
    h_parents[non_root] = h[parent[non_root]]
    d_w_msg = h_parents.T @ dz
    return dx, d_w_self, d_w_msg, db


def embed_fwd(table: np.ndarray, ids: np.ndarray) -> np.ndarray:
    if ids.size and ids.min() < 0:  # no numpy wraparound semantics here
        raise IndexError(f"embedding id {ids.min()} out of range [0, {table.shape[0]})")
    return table[ids].copy()


def embed_bwd(d_table: np.ndarray, ids: np.ndarray, d_rows: np.ndarray) -> None:
    np.add.at(d_table, ids, d_rows)


def adam_update(p, g, m, v, t: int, lr: float, b1: float, b2: float, eps: float) -> None:
    """In-place Adam update with bias correction; ``t`` is the 1-based step."""
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * g * g
    m_hat = m / (1.0 - b1 ** t)
    v_hat = v / (1.0 - b2 ** t)
    p -= lr * m_hat / (np.sqrt(v_hat) + eps)
