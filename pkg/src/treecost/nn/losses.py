"""Training and evaluation losses."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def huber_loss(pred: Tensor, target, delta: float = 1.0) -> Tensor:
    """Mean Huber loss: 0.5 e^2 for |e| <= delta, else delta (|e| - delta/2).

    The boundary |e| == delta uses the quadratic branch; both branches agree
    there, this just fixes the choice. ``target`` is a constant array.
    """
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    p = pred.data.reshape(-1)
    if p.size == 0:
        raise ValueError("huber_loss: empty input")
    if p.size != target.size:
        raise ValueError(f"huber_loss: length mismatch {p.size} vs {target.size}")
    if delta <= 0:
        raise ValueError("huber_loss: delta must be positive")
    e = p - target
    quad = np.abs(e) <= delta
    per = np.where(quad, 0.5 * e * e, delta * (np.abs(e) - 0.5 * delta))
    out = np.asarray(per.mean())
    n = p.size

    def backward_fn(grad):
        d = np.where(quad, e, delta * np.sign(e)) * (float(grad) / n)
        return (d.reshape(pred.data.shape),)

    return Tensor(out, (pred,), backward_fn)


def l1_loss(pred, target) -> float:
    """Mean absolute error; evaluation metric, not a tape op."""
    p = (pred.data if isinstance(pred, Tensor) else np.asarray(pred, dtype=np.float64)).reshape(-1)
    t = (target.data if isinstance(target, Tensor) else np.asarray(target, dtype=np.float64)).reshape(-1)
    if p.size == 0:
        raise ValueError("l1_loss: empty input")
    if p.size != t.size:
        raise ValueError(f"l1_loss: length mismatch {p.size} vs {t.size}")
    return float(np.abs(p - t).mean())
