"""Low-latency scoring of a live raw-PCM stream.

The stream contract is 16-bit little-endian signed mono at 16 kHz, no
header. A rolling buffer emits the first score once 1.2 s have arrived and
one more every 0.6 s after that; at end of stream a final zero-padded
window is emitted iff at least 1.0 s of audio past the last window start
remains (mirroring offline window extraction). Each window is normalized
independently, exactly like offline per-window prediction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import (
    AudioClip,
    TARGET_RATE,
    WindowSpec,
    extract_windows,
    normalize_and_scale,
)
from .evaluation import score_windows
from .model import forward_scores


@dataclass
class StreamScore:
    start_s: float
    t_end_s: float
    p_anger: float


def pcm16_to_floats(data: bytes) -> np.ndarray:
    """Decode little-endian signed 16-bit samples onto the +-1.0 scale."""
    return np.frombuffer(data, dtype="<i2").astype(np.float32) / np.float32(32768.0)


def _score_window(net, segment: np.ndarray, sample_rate: int, basis: str) -> float:
    clip = normalize_and_scale(AudioClip(segment, sample_rate), basis=basis)
    p_anger, _logits = forward_scores(net, clip.samples, mode="eval")
    return p_anger


def stream_scores(chunks, net, *, window: WindowSpec = WindowSpec(),
                  sample_rate: int = TARGET_RATE, basis: str = "rms"):
    """Generator over StreamScore for an iterable of raw PCM16 byte chunks.

    Chunk boundaries are arbitrary (an odd trailing byte is carried over);
    results depend only on the concatenated stream.
    """
    win = int(round(window.duration_s * sample_rate))
    hop = int(round(window.hop_s * sample_rate))
    min_content = int(round(window.min_content_s * sample_rate))

    buffer = np.empty(0, dtype=np.float32)
    buffer_start = 0  # absolute index of buffer[0]
    next_start = 0
    carry = b""
    for chunk in chunks:
        blob = carry + chunk
        if len(blob) % 2:
            carry = blob[-1:]
            blob = blob[:-1]
        else:
            carry = b""
        if not blob:
            continue
        buffer = np.concatenate([buffer, pcm16_to_floats(blob)])
        while buffer_start + len(buffer) >= next_start + win:
            lo = next_start - buffer_start
            segment = buffer[lo : lo + win]
            yield StreamScore(
                start_s=next_start / sample_rate,
                t_end_s=(next_start + win) / sample_rate,
                p_anger=_score_window(net, segment, sample_rate, basis),
            )
            next_start += hop
            drop = next_start - buffer_start
            if drop > 0:
                buffer = buffer[drop:]
                buffer_start = next_start
    # end of stream: flush one zero-padded window if enough audio remains
    total = buffer_start + len(buffer)
    if total - next_start >= min_content:
        lo = next_start - buffer_start
        segment = np.pad(buffer[lo:], (0, win - (len(buffer) - lo)))
        yield StreamScore(
            start_s=next_start / sample_rate,
            t_end_s=(next_start + win) / sample_rate,
            p_anger=_score_window(net, segment, sample_rate, basis),
        )


def predict_clip(net, clip: AudioClip, *, window: WindowSpec = WindowSpec(),
                 norm: str = "per-utterance", basis: str = "rms"):
    """Offline per-window predictions for a raw (pre-normalization) clip.

    Returns a list of (start_s, p_anger). `norm="per-utterance"` normalizes
    the whole clip once; `norm="per-window"` normalizes each window
    independently, matching the streaming path.
    """
    if norm == "per-utterance":
        normalized = normalize_and_scale(clip, basis=basis)
        windows = extract_windows(normalized, window)
        if not windows:
            return []
        probs = score_windows(net, [w.samples for w in windows])
        return [(w.start / clip.sample_rate, float(p)) for w, p in zip(windows, probs)]
    if norm == "per-window":
        windows = extract_windows(clip, window)
        return [
            (w.start / clip.sample_rate,
             _score_window(net, w.samples, clip.sample_rate, basis))
            for w in windows
        ]
    raise ValueError(f"norm must be 'per-utterance' or 'per-window', got {norm!r}")
