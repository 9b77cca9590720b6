"""Adam, patience-based learning-rate decay, and early stopping."""

from __future__ import annotations

from dataclasses import dataclass

from .. import kernels


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    decay_factor: float = 0.9
    patience_epochs: int = 6
    relative_improvement: float = 0.01
    min_learning_rate: float = 1e-6
    max_epochs: int = 200
    early_stop_patience: int = 20
    batch_size: int = 32

    def __post_init__(self):
        if not 0.0 < self.decay_factor < 1.0:
            raise ValueError("decay_factor must be in (0, 1)")
        if self.min_learning_rate > self.learning_rate:
            raise ValueError("min_learning_rate must not exceed learning_rate")
        if self.batch_size <= 0 or self.max_epochs <= 0:
            raise ValueError("batch_size and max_epochs must be positive")


def adam_step(params, config: OptimizerConfig, current_lr: float) -> None:
    """Standard bias-corrected Adam update; gradients are left untouched."""
    for p in params:
        p.step_count += 1
        kernels.adam_update(
            p.data.reshape(-1), p.grad.reshape(-1),
            p.adam_m.reshape(-1), p.adam_v.reshape(-1),
            p.step_count, current_lr, config.beta1, config.beta2, config.epsilon)


class PatienceDecay:
    """Multiply lr by decay_factor when no epoch in the trailing patience
    window improved on the best validation loss by relative_improvement;
    the window resets on every decay (and on every improvement)."""

    def __init__(self, config: OptimizerConfig):
        self.config = config
        self.lr = config.learning_rate
        self.best = float("inf")
        self.stale_epochs = 0

    def step(self, validation_loss: float) -> float:
        c = self.config
        if validation_loss < (1.0 - c.relative_improvement) * self.best:
            self.stale_epochs = 0
        else:
            self.stale_epochs += 1
        if validation_loss < self.best:
            self.best = validation_loss
        if self.stale_epochs >= c.patience_epochs:
            self.lr = max(self.lr * c.decay_factor, c.min_learning_rate)
            self.stale_epochs = 0
        return self.lr


def early_stop(history, patience: int = 20) -> bool:
    """True when the last ``patience`` validation losses did not improve on
    the best loss seen before them. False while the history is shorter than
    the window (warm-up)."""
    if len(history) <= patience:
        return False
    return min(history[-patience:]) >= min(history[:-patience])
