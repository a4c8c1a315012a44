"""Minimal differentiable kernel for 1-D convolutional audio networks.

All operations work on batch-first arrays of shape ``(N, C, L)`` — batch,
channels, time — and implement both the forward pass and an explicit
backward pass (no general autograd graph). Randomness is always drawn from
an explicitly passed ``numpy.random.Generator``.
"""

from .layers import (
    BatchNorm1d,
    Conv1d,
    Dropout,
    GlobalAvgPool,
    MaxPool1d,
    Parameter,
    ReLU,
    softmax_cross_entropy,
)
from .adam import Adam, AdamState, adam_step
from .gradcheck import grad_check, numerical_gradients, run_chain, backward_chain

__all__ = [
    "Parameter",
    "Conv1d",
    "BatchNorm1d",
    "ReLU",
    "MaxPool1d",
    "Dropout",
    "GlobalAvgPool",
    "softmax_cross_entropy",
    "Adam",
    "AdamState",
    "adam_step",
    "grad_check",
    "numerical_gradients",
    "run_chain",
    "backward_chain",
]
