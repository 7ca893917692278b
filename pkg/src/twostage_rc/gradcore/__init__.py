"""Minimal reverse-mode differentiation over dense float64 tensors."""

from . import ops
from .lstm import BiLSTM, lstm_cell, lstm_seq
from .ops import (
    dropout,
    elementwise,
    matmul,
    max_pool_time,
    softmax_masked,
)
from .optim import RMSProp
from .tensor import (
    DimensionError,
    DomainError,
    EmptySequenceError,
    EmptySupportError,
    GradcoreError,
    ParameterError,
    RankError,
    Tensor,
    backward,
    no_grad,
    topological_order,
)

__all__ = [
    "BiLSTM",
    "DimensionError",
    "DomainError",
    "EmptySequenceError",
    "EmptySupportError",
    "GradcoreError",
    "ParameterError",
    "RMSProp",
    "RankError",
    "Tensor",
    "backward",
    "dropout",
    "elementwise",
    "lstm_cell",
    "lstm_seq",
    "matmul",
    "max_pool_time",
    "no_grad",
    "ops",
    "softmax_masked",
    "topological_order",
]
