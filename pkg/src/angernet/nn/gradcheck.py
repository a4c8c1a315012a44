"""Finite-difference verification of analytic gradients.

Checks run the fragment at whatever dtype the caller built it with; use
float64 so 32-bit round-off does not mask real backward-pass errors. The
default step h=1e-5 suits float64; use h=1e-3 if checking float32 directly.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from .layers import Dropout, softmax_cross_entropy


def run_chain(layers, x, training=False, rng=None):
    """Forward `x` through a sequence of layers."""
    out = x
    for layer in layers:
        out = layer.forward(out, training=training, rng=rng)
    return out


def backward_chain(layers, grad):
    """Propagate `grad` back through a sequence of layers; returns d(input)."""
    for layer in reversed(layers):
        grad = layer.backward(grad)
    return grad


def numerical_gradients(loss_fn, arrays, h=1e-5):
    """Central-difference gradient of a scalar loss w.r.t. each array.

    Arrays are perturbed in place and restored; the loss function takes no
    arguments and must read the arrays by reference.
    """
    grads = []
    for arr in arrays:
        g = np.zeros(arr.shape, dtype=np.float64)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn()
            flat[i] = orig - h
            down = loss_fn()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def _max_rel_err(analytic, numeric, guard=1e-3):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), guard)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def grad_check(layers, x, labels=None, *, h=1e-5, training=False, proj_seed=0):
    """Max relative error between analytic and finite-difference gradients.

    The scalar loss is softmax cross-entropy against `labels` when given
    (the chain output must then be (N, K) after squeezing the time axis),
    otherwise the inner product of the output with a fixed random
    projection. Checks the input and every unfrozen parameter.

    The fragment must be deterministic: dropout layers are only allowed at
    rate 0 when `training` is set.
    """
    if training:
        for layer in layers:
            if isinstance(layer, Dropout) and layer.rate > 0.0:
                raise ConfigError("grad_check requires dropout at rate 0 in training mode")

    params = [p for layer in layers for p in layer.parameters() if not p.frozen]
    for p in params:
        p.zero_grad()

    out = run_chain(layers, x, training=training)
    if labels is None:
        proj = np.random.default_rng(proj_seed).standard_normal(out.shape)
        dout = proj.astype(out.dtype)
        analytic_loss = float((out * proj).sum())

        def loss_fn():
            o = run_chain(layers, x, training=training)
            return float((o * proj).sum())

    else:
        n = out.shape[0]
        logits = out.reshape(n, -1)
        analytic_loss, _, dlogits = softmax_cross_entropy(logits, labels)
        dout = dlogits.reshape(out.shape)

        def loss_fn():
            o = run_chain(layers, x, training=training)
            return softmax_cross_entropy(o.reshape(n, -1), labels)[0]

    dx = backward_chain(layers, dout)
    analytic = [dx] + [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]

    numeric = numerical_gradients(loss_fn, [x] + [p.data for p in params], h=h)
    del analytic_loss
    return max(_max_rel_err(a, n) for a, n in zip(analytic, numeric))
