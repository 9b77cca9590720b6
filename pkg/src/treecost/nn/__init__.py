"""Minimal dense-tensor numeric core with reverse-mode differentiation."""

from .layers import (concat_cols, dense_forward, embedding_lookup, mean_rows,
                     squeeze_cols, stack_rows, sum_all, tree_round)
from .losses import huber_loss, l1_loss
from .optim import OptimizerConfig, PatienceDecay, adam_step, early_stop
from .tensor import Parameter, Tensor, backward, zero_grad

__all__ = [
    "Tensor", "Parameter", "backward", "zero_grad",
    "dense_forward", "embedding_lookup", "tree_round", "concat_cols",
    "mean_rows", "stack_rows", "squeeze_cols", "sum_all",
    "huber_loss", "l1_loss",
    "OptimizerConfig", "PatienceDecay", "adam_step", "early_stop",
]
