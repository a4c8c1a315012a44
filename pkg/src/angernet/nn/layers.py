"""Layer kernels: 1-D convolution, batch norm, ReLU, max pool, dropout,
global average pooling, and softmax cross-entropy.

Every layer caches what its backward pass needs during forward (the cache
is replaced on the next forward). Gradients accumulate into
``Parameter.grad``; frozen parameters are left untouched and never
allocate a gradient buffer.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, NumericError, ShapeError


class Parameter:
    """A learnable array with an optional gradient buffer and a freeze flag."""

    __slots__ = ("name", "data", "grad", "frozen")

    def __init__(self, data: np.ndarray, name: str = ""):
        self.data = data
        self.grad = None
        self.frozen = False
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def add_grad(self, g: np.ndarray) -> None:
        if self.frozen:
            return
        if g.shape != self.data.shape:
            raise ShapeError(
                f"gradient shape {g.shape} != parameter shape {self.data.shape}"
                f" for {self.name or 'parameter'}"
            )
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def zero_grad(self) -> None:
        self.grad = None


def _check_rank3(x, who):
    if x.ndim != 3:
        raise ShapeError(f"{who} expects a (batch, channels, length) array, got shape {x.shape}")


class Conv1d:
    """1-D cross-correlation with per-side zero padding.

    Output length is ``(L + 2*padding - kernel) // stride + 1``. The forward
    pass builds a strided window matrix once and runs a single GEMM; the
    backward pass reuses it for the weight gradient and scatters the input
    gradient kernel-tap by kernel-tap.
    """

    def __init__(self, in_channels, out_channels, kernel, stride=1, padding=0,
                 *, rng=None, dtype=np.float32):
        if kernel < 1 or stride < 1 or padding < 0:
            raise ConfigError(
                f"conv requires kernel >= 1, stride >= 1, padding >= 0 "
                f"(got kernel={kernel}, stride={stride}, padding={padding})"
            )
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        if rng is not None:
            limit = np.sqrt(1.0 / (in_channels * kernel))
            w = rng.uniform(-limit, limit, size=(out_channels, in_channels, kernel))
        else:
            w = np.zeros((out_channels, in_channels, kernel))
        self.weight = Parameter(w.astype(dtype))
        self.bias = Parameter(np.zeros(out_channels, dtype=dtype))
        self.needs_input_grad = True
        self._cache = None

    def out_length(self, length: int):
        """Output length for an input of `length` samples, or None if it collapses."""
        padded = length + 2 * self.padding
        if padded < self.kernel:
            return None
        return (padded - self.kernel) // self.stride + 1

    def parameters(self):
        return [self.weight, self.bias]

    def forward(self, x, training=False, rng=None):
        _check_rank3(x, "conv1d")
        n, c, length = x.shape
        if c != self.in_channels:
            raise ShapeError(f"conv1d expects {self.in_channels} input channels, got {c}")
        t_out = self.out_length(length)
        if t_out is None:
            raise ShapeError(
                f"conv1d kernel {self.kernel} exceeds padded input length "
                f"{length + 2 * self.padding}: empty output"
            )
        if self.padding:
            xp = np.pad(x, ((0, 0), (0, 0), (self.padding, self.padding)))
        else:
            xp = x
        windows = np.lib.stride_tricks.sliding_window_view(xp, self.kernel, axis=2)
        windows = windows[:, :, :: self.stride, :]  # (N, C, T, K)
        cols = np.ascontiguousarray(windows.transpose(0, 2, 1, 3)).reshape(
            n * t_out, c * self.kernel
        )
        w_mat = self.weight.data.reshape(self.out_channels, -1)
        out = cols @ w_mat.T
        out += self.bias.data
        out = np.ascontiguousarray(out.reshape(n, t_out, self.out_channels).transpose(0, 2, 1))
        self._cache = (cols, n, t_out, xp.shape[2], x.dtype)
        return out

    def backward(self, dout):
        if self._cache is None:
            raise RuntimeError("conv1d backward called before forward")
        cols, n, t_out, padded_len, in_dtype = self._cache
        dmat = np.ascontiguousarray(dout.transpose(0, 2, 1)).reshape(n * t_out, self.out_channels)
        if not self.weight.frozen:
            self.weight.add_grad(
                (dmat.T @ cols).reshape(self.weight.data.shape)
            )
            self.bias.add_grad(dout.sum(axis=(0, 2)))
        if not self.needs_input_grad:
            return None
        w_mat = self.weight.data.reshape(self.out_channels, -1)
        dcols = (dmat @ w_mat).reshape(n, t_out, self.in_channels, self.kernel)
        # kernel-tap-first layout so each scatter slab reads contiguously
        dcols = np.ascontiguousarray(dcols.transpose(3, 0, 2, 1))  # (K, N, C, T)
        dxp = np.zeros((n, self.in_channels, padded_len), dtype=in_dtype)
        span = (t_out - 1) * self.stride + 1
        for k in range(self.kernel):
            dxp[:, :, k : k + span : self.stride] += dcols[k]
        if self.padding:
            return dxp[:, :, self.padding : padded_len - self.padding]
        return dxp


class BatchNorm1d:
    """Per-channel batch normalization over batch and time.

    Training mode normalizes with (biased) batch statistics and updates the
    running buffers as ``running = (1 - momentum) * running + momentum * batch``;
    evaluation mode is a fixed affine map built from the running buffers.
    """

    def __init__(self, channels, eps=1e-5, momentum=0.1, dtype=np.float32):
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.gamma = Parameter(np.ones(channels, dtype=dtype))
        self.beta = Parameter(np.zeros(channels, dtype=dtype))
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.freeze_buffers = False
        self._cache = None

    def parameters(self):
        return [self.gamma, self.beta]

    def forward(self, x, training=False, rng=None):
        _check_rank3(x, "batch_norm1d")
        n, c, length = x.shape
        if c != self.channels:
            raise ShapeError(f"batch_norm1d expects {self.channels} channels, got {c}")
        gamma = self.gamma.data[None, :, None]
        beta = self.beta.data[None, :, None]
        if training:
            if n * length < 2:
                raise ShapeError("batch_norm1d training mode needs >= 2 elements per channel")
            count = n * length
            # single-pass stats, accumulated at float64 regardless of x.dtype
            mean = np.einsum("ncl->c", x, dtype=np.float64) / count
            mean_sq = np.einsum("ncl,ncl->c", x, x, dtype=np.float64) / count
            var = np.maximum(mean_sq - mean * mean, 0.0)
            std = np.sqrt(var + self.eps).astype(x.dtype)
            xhat = (x - mean.astype(x.dtype)[None, :, None]) / std[None, :, None]
            if not self.freeze_buffers:
                m = self.momentum
                self.running_mean = ((1.0 - m) * self.running_mean + m * mean).astype(
                    self.running_mean.dtype
                )
                self.running_var = ((1.0 - m) * self.running_var + m * var).astype(
                    self.running_var.dtype
                )
            self._cache = ("train", xhat, std)
        else:
            std = np.sqrt(self.running_var + self.eps).astype(x.dtype, copy=False)
            xhat = (x - self.running_mean[None, :, None]) / std[None, :, None]
            self._cache = ("eval", xhat, std)
        return gamma * xhat + beta

    def backward(self, dout):
        if self._cache is None:
            raise RuntimeError("batch_norm1d backward called before forward")
        mode, xhat, std = self._cache
        if not self.gamma.frozen:
            self.gamma.add_grad(
                np.einsum("ncl,ncl->c", dout, xhat, dtype=np.float64).astype(dout.dtype)
            )
            self.beta.add_grad(
                np.einsum("ncl->c", dout, dtype=np.float64).astype(dout.dtype)
            )
        dxhat = dout * self.gamma.data[None, :, None]
        if mode == "eval":
            return dxhat / std[None, :, None]
        count = dout.shape[0] * dout.shape[2]
        mean_dxhat = (np.einsum("ncl->c", dxhat, dtype=np.float64) / count).astype(dout.dtype)
        mean_dxhat_xhat = (
            np.einsum("ncl,ncl->c", dxhat, xhat, dtype=np.float64) / count
        ).astype(dout.dtype)
        out = dxhat
        out -= mean_dxhat[None, :, None]
        out -= xhat * mean_dxhat_xhat[None, :, None]
        out /= std[None, :, None]
        return out


class ReLU:
    """Elementwise max(0, x); the subgradient at exactly 0 is 0."""

    def __init__(self):
        self._mask = None

    def parameters(self):
        return []

    def forward(self, x, training=False, rng=None):
        self._mask = x > 0
        return np.maximum(x, np.zeros((), dtype=x.dtype))

    def backward(self, dout):
        return dout * self._mask


class MaxPool1d:
    """Max pooling over time; gradient routes to the earliest argmax on ties."""

    def __init__(self, window, stride):
        if window < 1 or stride < 1:
            raise ConfigError(f"max_pool1d requires window >= 1 and stride >= 1")
        self.window = window
        self.stride = stride
        self._cache = None

    def out_length(self, length: int):
        if length < self.window:
            return None
        return (length - self.window) // self.stride + 1

    def parameters(self):
        return []

    def forward(self, x, training=False, rng=None):
        _check_rank3(x, "max_pool1d")
        n, c, length = x.shape
        t_out = self.out_length(length)
        if t_out is None:
            raise ShapeError(
                f"max_pool1d window {self.window} exceeds input length {length}: empty output"
            )
        if self.stride == self.window:
            windows = np.ascontiguousarray(x[:, :, : t_out * self.window]).reshape(
                n, c, t_out, self.window
            )
        else:
            windows = np.lib.stride_tricks.sliding_window_view(x, self.window, axis=2)
            windows = windows[:, :, :: self.stride, :]
        # np.argmax returns the first maximal index, which pins the tie-break.
        idx = windows.argmax(axis=3)
        out = np.take_along_axis(windows, idx[..., None], axis=3)[..., 0]
        self._cache = (idx, x.shape, x.dtype)
        return np.ascontiguousarray(out)

    def backward(self, dout):
        idx, in_shape, in_dtype = self._cache
        n, c, length = in_shape
        t_out = idx.shape[2]
        dx = np.zeros(in_shape, dtype=in_dtype)
        if self.stride == self.window:
            # windows are disjoint: scatter without accumulation
            span = t_out * self.window
            dxr = np.zeros((n, c, t_out, self.window), dtype=in_dtype)
            np.put_along_axis(dxr, idx[..., None], dout[..., None], axis=3)
            dx[:, :, :span] = dxr.reshape(n, c, span)
            return dx
        positions = idx + (np.arange(t_out) * self.stride)[None, None, :]
        np.add.at(
            dx,
            (np.arange(n)[:, None, None], np.arange(c)[None, :, None], positions),
            dout,
        )
        return dx


class Dropout:
    """Inverted dropout: train mode zeroes with probability `rate` and scales
    survivors by 1/(1-rate); eval mode is the identity."""

    def __init__(self, rate):
        if not (0.0 <= rate < 1.0):
            raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate
        self._scaled_mask = None

    def parameters(self):
        return []

    def forward(self, x, training=False, rng=None):
        if not training or self.rate == 0.0:
            self._scaled_mask = None
            return x
        if rng is None:
            raise ConfigError("dropout in training mode requires an explicit rng")
        keep = rng.random(x.shape) >= self.rate
        self._scaled_mask = keep.astype(x.dtype) / np.asarray(1.0 - self.rate, dtype=x.dtype)
        return x * self._scaled_mask

    def backward(self, dout):
        if self._scaled_mask is None:
            return dout
        return dout * self._scaled_mask


class GlobalAvgPool:
    """Mean over time per channel, reducing (N, C, L) to (N, C, 1)."""

    def __init__(self):
        self._length = None

    def parameters(self):
        return []

    def forward(self, x, training=False, rng=None):
        _check_rank3(x, "global_average_pool")
        if x.shape[2] < 1:
            raise ShapeError("global_average_pool requires length >= 1")
        self._length = x.shape[2]
        return x.mean(axis=2, keepdims=True)

    def backward(self, dout):
        length = self._length
        scale = np.asarray(1.0 / length, dtype=dout.dtype)
        return np.broadcast_to(dout * scale, dout.shape[:2] + (length,)).copy()


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy of a softmax over stabilized logits.

    Args:
        logits: (N, K) array.
        labels: (N,) integer class indices.

    Returns:
        (loss, probabilities, dlogits), where dlogits is the gradient of the
        mean loss, i.e. (p - one_hot) / N per example.
    """
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if logits.ndim != 2:
        raise ShapeError(f"logits must be (batch, classes), got shape {logits.shape}")
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite logits passed to softmax_cross_entropy")
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} does not match batch size {n}")
    if labels.min() < 0 or labels.max() >= k:
        raise ShapeError(f"labels must lie in [0, {k}), got range [{labels.min()}, {labels.max()}]")
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    picked = probs[np.arange(n), labels]
    loss = float(-np.log(picked).mean())
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    return loss, probs, dlogits.astype(logits.dtype, copy=False)
