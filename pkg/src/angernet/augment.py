"""Training-time audio transforms: time stretch, quarter-step pitch shift,
and additive Gaussian noise, composed into one seeded pipeline.

The stretch is a phase vocoder (1024-sample Hann analysis window, hop 256,
phase accumulation across frames); pitch shifting resamples by the inverse
pitch factor and stretches the duration back.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .audio import SEGMENT_SAMPLES, resample_signal
from .errors import ConfigError

STFT_WINDOW = 1024
STFT_HOP = 256
MAX_QUARTER_STEPS = 12


@dataclass
class AugmentConfig:
    stretch_range: tuple[float, float] = (0.9, 1.1)
    pitch_quarter_steps: tuple[int, int] = (-5, 5)
    noise_sigma_frac: tuple[float, float] = (0.0, 0.005)
    enabled: bool = True
    continuous_pitch: bool = False

    def __post_init__(self):
        if self.stretch_range[0] <= 0.0:
            raise ConfigError(f"stretch factors must be positive, got {self.stretch_range}")
        if self.noise_sigma_frac[0] < 0.0:
            raise ConfigError(f"noise sigma must be nonnegative, got {self.noise_sigma_frac}")


def _hann_periodic(n: int) -> np.ndarray:
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / n))


def _stft(x: np.ndarray, win_len: int, hop: int) -> np.ndarray:
    frames = np.lib.stride_tricks.sliding_window_view(x, win_len)[::hop]
    return np.fft.rfft(frames * _hann_periodic(win_len), axis=1)


def _istft(spec: np.ndarray, win_len: int, hop: int) -> np.ndarray:
    frames = np.fft.irfft(spec, n=win_len, axis=1)
    window = _hann_periodic(win_len)
    frames = frames * window
    n_frames = frames.shape[0]
    out = np.zeros((n_frames - 1) * hop + win_len)
    weight = np.zeros_like(out)
    wsq = window * window
    for t in range(n_frames):
        out[t * hop : t * hop + win_len] += frames[t]
        weight[t * hop : t * hop + win_len] += wsq
    return out / np.maximum(weight, 1e-10)


def time_stretch(segment: np.ndarray, rate: float) -> np.ndarray:
    """Change duration by `rate` (output length round(L/rate)) without
    changing pitch."""
    if rate <= 0.0:
        raise ConfigError(f"stretch rate must be positive, got {rate}")
    x = np.asarray(segment, dtype=np.float64)
    if len(x) < STFT_WINDOW:
        raise ConfigError(
            f"segment of {len(x)} samples is shorter than the {STFT_WINDOW}-sample "
            "analysis window"
        )
    out_len = int(round(len(x) / rate))
    spec = _stft(x, STFT_WINDOW, STFT_HOP)
    n_frames, n_bins = spec.shape
    spec = np.vstack([spec, np.zeros((1, n_bins), dtype=spec.dtype)])
    phase_advance = 2.0 * np.pi * STFT_HOP * np.arange(n_bins) / STFT_WINDOW
    time_steps = np.arange(0, n_frames, rate)

    mags = np.abs(spec)
    phases = np.angle(spec)
    phase_acc = phases[0].copy()
    out_spec = np.empty((len(time_steps), n_bins), dtype=np.complex128)
    for i, step in enumerate(time_steps):
        t0 = int(step)
        frac = step - t0
        mag = (1.0 - frac) * mags[t0] + frac * mags[t0 + 1]
        out_spec[i] = mag * np.exp(1j * phase_acc)
        dphi = phases[t0 + 1] - phases[t0] - phase_advance
        dphi -= 2.0 * np.pi * np.round(dphi / (2.0 * np.pi))
        phase_acc = phase_acc + phase_advance + dphi

    y = _istft(out_spec, STFT_WINDOW, STFT_HOP)
    if len(y) >= out_len:
        return y[:out_len].astype(np.float32)
    return np.pad(y, (0, out_len - len(y))).astype(np.float32)


def pitch_shift(segment: np.ndarray, quarter_steps: int) -> np.ndarray:
    """Scale pitch by 2^(q/24), preserving length exactly.

    Resamples by the inverse pitch factor (which scales frequency and
    shortens/lengthens the segment), then stretches the duration back and
    trims/pads to the input length.
    """
    if abs(quarter_steps) > MAX_QUARTER_STEPS:
        raise ConfigError(
            f"|quarter_steps| must be <= {MAX_QUARTER_STEPS}, got {quarter_steps}"
        )
    return _pitch_shift_by_steps(segment, quarter_steps)


def _pitch_shift_by_steps(segment: np.ndarray, quarter_steps: float) -> np.ndarray:
    x = np.asarray(segment, dtype=np.float32)
    if quarter_steps == 0:
        return x.copy()
    factor = 2.0 ** (quarter_steps / 24.0)
    ratio = Fraction(1.0 / factor).limit_denominator(512)
    resampled = resample_signal(x, source_hz=ratio.denominator, target_hz=ratio.numerator)
    stretched = time_stretch(resampled, rate=1.0 / factor)
    return _fit_length(stretched, len(x))


def add_noise(segment: np.ndarray, sigma: float, rng) -> np.ndarray:
    """Add i.i.d. Gaussian noise of standard deviation `sigma`."""
    if sigma < 0.0:
        raise ConfigError(f"noise sigma must be nonnegative, got {sigma}")
    x = np.asarray(segment, dtype=np.float32)
    if sigma == 0.0:
        return x.copy()
    return (x + rng.normal(0.0, sigma, size=len(x))).astype(np.float32)


def _fit_length(x: np.ndarray, n: int) -> np.ndarray:
    if len(x) > n:
        start = (len(x) - n) // 2
        return x[start : start + n]
    if len(x) < n:
        return np.pad(x, (0, n - len(x)))
    return x


def augment_segment(segment: np.ndarray, cfg: AugmentConfig, rng) -> np.ndarray:
    """Randomized stretch -> pitch -> noise, returned at exactly the input
    segment length (center-cropped or tail-padded)."""
    segment = np.asarray(segment, dtype=np.float32)
    if not cfg.enabled:
        return segment
    rate = float(rng.uniform(*cfg.stretch_range))
    lo, hi = cfg.pitch_quarter_steps
    if cfg.continuous_pitch:
        quarter_steps = float(rng.uniform(lo, hi))
    else:
        quarter_steps = int(rng.integers(lo, hi + 1))
    sigma_frac = float(rng.uniform(*cfg.noise_sigma_frac))
    out = time_stretch(segment, rate)
    out = _pitch_shift_by_steps(out, quarter_steps)
    amplitude = float(np.max(np.abs(out))) if len(out) else 0.0
    out = add_noise(out, sigma_frac * amplitude, rng)
    return _fit_length(out, len(segment))
