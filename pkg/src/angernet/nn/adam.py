"""Adam optimizer with bias correction.

Defaults follow the usual recommendation (beta1=0.9, beta2=0.999,
epsilon=1e-8) except for the learning rate, which defaults to 5e-3 here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError
from .layers import Parameter

DEFAULT_LR = 5e-3


@dataclass
class AdamState:
    """Moment buffers and step counter for a single parameter."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = DEFAULT_LR
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_param(cls, data: np.ndarray, **hyper) -> "AdamState":
        return cls(m=np.zeros_like(data), v=np.zeros_like(data), **hyper)


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState) -> np.ndarray:
    """One in-place Adam update of `param`; increments state.step once."""
    if grad.shape != param.shape or state.m.shape != param.shape:
        raise ShapeError(
            f"adam_step shape mismatch: param {param.shape}, grad {grad.shape}, "
            f"state {state.m.shape}"
        )
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    state.m = b1 * state.m + (1.0 - b1) * grad
    state.v = b2 * state.v + (1.0 - b2) * grad * grad
    m_hat = state.m / (1.0 - b1 ** state.step)
    v_hat = state.v / (1.0 - b2 ** state.step)
    param -= (state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)).astype(
        param.dtype, copy=False
    )
    return param


class Adam:
    """Tracks one AdamState per named parameter and skips frozen ones."""

    def __init__(self, lr=DEFAULT_LR, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.states: dict[str, AdamState] = {}

    def _state_for(self, p: Parameter) -> AdamState:
        key = p.name or str(id(p))
        state = self.states.get(key)
        if state is None:
            state = AdamState.for_param(
                p.data, lr=self.lr, beta1=self.beta1, beta2=self.beta2, epsilon=self.epsilon
            )
            self.states[key] = state
        return state

    def step(self, params) -> None:
        for p in params:
            if p.frozen or p.grad is None:
                continue
            adam_step(p.data, p.grad, self._state_for(p))

    @staticmethod
    def zero_grad(params) -> None:
        for p in params:
            p.zero_grad()
