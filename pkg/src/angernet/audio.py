"""WAV ingestion, resampling, two-stage amplitude normalization, and
1.2-second windowing.

All clips are mono float32 on a full scale of +-1.0 until
``normalize_and_scale`` maps them to network units (full scale +-256).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache
from math import gcd

import numpy as np
from scipy.signal import upfirdn

from .errors import AudioFormatError, ClipTooShortError, ConfigError

TARGET_RATE = 16000
SEGMENT_SAMPLES = 19200  # 1.2 s at 16 kHz
NETWORK_FULL_SCALE = 256.0


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ConfigError(f"sample rate must be positive, got {self.sample_rate}")
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.samples.ndim != 1:
            raise ConfigError(f"clips are mono 1-D arrays, got shape {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise AudioFormatError("clip contains non-finite samples")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class WindowSpec:
    duration_s: float = 1.2
    hop_s: float = 0.6
    min_content_s: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.min_content_s <= self.duration_s):
            raise ConfigError(
                f"min_content_s must lie in (0, duration_s], got {self.min_content_s}"
            )
        if self.hop_s <= 0.0:
            raise ConfigError(f"hop_s must be positive, got {self.hop_s}")


@dataclass
class Window:
    start: int  # sample index into the source clip
    samples: np.ndarray


# -- WAV container ----------------------------------------------------------

_PCM_SCALES = {16: 32768.0, 24: 8388608.0, 32: 2147483648.0}


def read_wav(data: bytes) -> AudioClip:
    """Parse a RIFF/WAVE file: PCM 16/24/32-bit or float32, any channel count.

    Channels are averaged to mono and integer samples scaled to [-1, 1].
    """
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise AudioFormatError("not a RIFF/WAVE file")
    pos = 12
    fmt = None
    payload = None
    while pos + 8 <= len(data):
        chunk_id = data[pos : pos + 4]
        (size,) = struct.unpack("<I", data[pos + 4 : pos + 8])
        body_start = pos + 8
        if body_start + size > len(data):
            raise AudioFormatError(
                f"chunk {chunk_id!r} declares {size} bytes but only "
                f"{len(data) - body_start} remain: truncated file"
            )
        body = data[body_start : body_start + size]
        if chunk_id == b"fmt ":
            fmt = _parse_fmt(body)
        elif chunk_id == b"data":
            payload = body
        pos = body_start + size + (size & 1)  # chunks are word-aligned
    if fmt is None:
        raise AudioFormatError("missing fmt chunk")
    if payload is None:
        raise AudioFormatError("missing data chunk")
    code, channels, rate, bits = fmt
    frame_bytes = channels * (bits // 8)
    if frame_bytes == 0 or len(payload) % frame_bytes:
        raise AudioFormatError("data chunk is not a whole number of frames")
    if code == 1:
        if bits not in _PCM_SCALES:
            raise AudioFormatError(f"unsupported PCM width: {bits}-bit")
        if bits == 24:
            raw = np.frombuffer(payload, dtype=np.uint8).reshape(-1, 3)
            values = (
                raw[:, 0].astype(np.int32)
                | (raw[:, 1].astype(np.int32) << 8)
                | (raw[:, 2].astype(np.int8).astype(np.int32) << 16)
            )
        else:
            values = np.frombuffer(payload, dtype=f"<i{bits // 8}")
        samples = values.astype(np.float64) / _PCM_SCALES[bits]
    elif code == 3:
        if bits != 32:
            raise AudioFormatError(f"unsupported float width: {bits}-bit")
        samples = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    else:
        raise AudioFormatError(f"unsupported codec (format tag {code})")
    mono = samples.reshape(-1, channels).mean(axis=1)
    return AudioClip(mono.astype(np.float32), rate)


def _parse_fmt(body: bytes):
    if len(body) < 16:
        raise AudioFormatError("fmt chunk too short")
    code, channels, rate, _byte_rate, _align, bits = struct.unpack("<HHIIHH", body[:16])
    if code == 0xFFFE:  # WAVE_FORMAT_EXTENSIBLE wraps the real tag in the GUID
        if len(body) < 26:
            raise AudioFormatError("extensible fmt chunk too short")
        (code,) = struct.unpack("<H", body[24:26])
    if channels < 1:
        raise AudioFormatError("fmt chunk declares zero channels")
    return code, channels, rate, bits


def read_wav_file(path) -> AudioClip:
    with open(path, "rb") as fh:
        return read_wav(fh.read())


def write_wav(path, samples: np.ndarray, sample_rate: int) -> None:
    """Write mono PCM16; samples on the +-1.0 scale are clipped to full range."""
    values = np.clip(np.round(np.asarray(samples, dtype=np.float64) * 32768.0), -32768, 32767)
    payload = values.astype("<i2").tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, sample_rate, sample_rate * 2, 2, 16)
    header += b"data" + struct.pack("<I", len(payload))
    with open(path, "wb") as fh:
        fh.write(header + payload)


# -- resampling --------------------------------------------------------------


@lru_cache(maxsize=64)
def _kaiser_sinc_filter(up: int, down: int, zeros: int, beta: float):
    """Windowed-sinc lowpass for rational resampling at rate source*up.

    Cutoff at min(source, target)/2; `zeros` zero-crossings per side.
    """
    m = max(up, down)
    cutoff = 1.0 / (2.0 * m)  # cycles per upsampled sample
    half = zeros * m
    n = np.arange(-half, half + 1, dtype=np.float64)
    h = 2.0 * cutoff * up * np.sinc(2.0 * cutoff * n) * np.kaiser(2 * half + 1, beta)
    return h, half


def resample_signal(x: np.ndarray, source_hz: int, target_hz: int,
                    zeros: int = 64, beta: float = 8.6) -> np.ndarray:
    """Polyphase windowed-sinc resampling; output has round(L*target/source) samples."""
    if source_hz == target_hz:
        return np.asarray(x)
    g = gcd(source_hz, target_hz)
    up, down = target_hz // g, source_hz // g
    out_len = int(round(len(x) * target_hz / source_hz))
    h, half = _kaiser_sinc_filter(up, down, zeros, beta)
    pad = (-half) % down  # shift so the filter center lands on output samples
    if pad:
        h = np.concatenate([np.zeros(pad), h])
    y = upfirdn(h, np.asarray(x, dtype=np.float64), up=up, down=down)
    start = (half + pad) // down
    need = start + out_len
    if len(y) < need:
        y = np.pad(y, (0, need - len(y)))
    return y[start:need]


def resample(clip: AudioClip, target_hz: int = TARGET_RATE,
             zeros: int = 64, beta: float = 8.6) -> AudioClip:
    """Resample to `target_hz`; equal rates pass through bitwise."""
    if clip.sample_rate == target_hz:
        return clip
    out = resample_signal(clip.samples, clip.sample_rate, target_hz, zeros, beta)
    return AudioClip(out.astype(np.float32), target_hz)


# -- amplitude normalization --------------------------------------------------


def normalize_dbfs(clip: AudioClip, target_dbfs: float = -20.0, basis: str = "rms",
                   silence_floor: float = 1e-8) -> AudioClip:
    """Gain the clip so its RMS (or peak, per `basis`) sits at `target_dbfs`.

    Digital silence (level below `silence_floor`) is returned unchanged.
    """
    samples = clip.samples.astype(np.float64)
    if basis == "rms":
        level = float(np.sqrt(np.mean(samples * samples))) if len(samples) else 0.0
    elif basis == "peak":
        level = float(np.max(np.abs(samples))) if len(samples) else 0.0
    else:
        raise ConfigError(f"basis must be 'rms' or 'peak', got {basis!r}")
    if level < silence_floor:
        return clip
    gain = 10.0 ** (target_dbfs / 20.0) / level
    return AudioClip((samples * gain).astype(np.float32), clip.sample_rate)


def normalize_and_scale(clip: AudioClip, basis: str = "rms") -> AudioClip:
    """Two-stage normalization: to -20 dBFS, then into +-256 network units."""
    leveled = normalize_dbfs(clip, -20.0, basis=basis)
    return AudioClip(leveled.samples * np.float32(NETWORK_FULL_SCALE), clip.sample_rate)


# -- windowing -----------------------------------------------------------------


def _window_geometry(clip: AudioClip, spec: WindowSpec):
    rate = clip.sample_rate
    return (
        int(round(spec.duration_s * rate)),
        int(round(spec.hop_s * rate)),
        int(round(spec.min_content_s * rate)),
    )


def extract_windows(clip: AudioClip, spec: WindowSpec = WindowSpec()) -> list[Window]:
    """Sliding fixed-length windows starting at 0, hop, 2*hop, ...

    A window is emitted iff it covers at least `min_content_s` of real audio;
    short tails are zero-padded to the full window length.
    """
    win, hop, min_content = _window_geometry(clip, spec)
    samples = clip.samples
    out = []
    start = 0
    while len(samples) - start >= min_content:
        segment = samples[start : start + win]
        if len(segment) < win:
            segment = np.pad(segment, (0, win - len(segment)))
        out.append(Window(start=start, samples=segment))
        start += hop
    return out


def random_segment(clip: AudioClip, rng, spec: WindowSpec = WindowSpec()) -> np.ndarray:
    """One window sampled uniformly over all starts leaving >= min_content_s
    of real audio; raises ClipTooShortError below the minimum duration."""
    win, _hop, min_content = _window_geometry(clip, spec)
    samples = clip.samples
    if len(samples) < min_content:
        raise ClipTooShortError(
            f"clip of {len(samples)} samples is below the {min_content}-sample minimum"
        )
    start = int(rng.integers(0, len(samples) - min_content + 1))
    segment = samples[start : start + win]
    if len(segment) < win:
        segment = np.pad(segment, (0, win - len(segment)))
    return segment
