"""Dataset manifests, the anger/frustration label mapping, balanced
minibatch sampling, and a synthetic separable corpus generator.

Manifests are line-delimited JSON, one utterance per line::

    {"audio_path": "wavs/x.wav", "emotion_tag": "anger",
     "dataset_name": "synthetic", "split": "train",
     "session": null, "duration_s": 2.4}

``audio_path`` may be relative; loaders resolve it against the manifest's
directory. Unknown extra fields are preserved on load but ignored.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import (
    AudioClip,
    SEGMENT_SAMPLES,
    TARGET_RATE,
    WindowSpec,
    normalize_and_scale,
    random_segment,
    read_wav_file,
    resample,
    write_wav,
)
from .augment import AugmentConfig, augment_segment
from .errors import ConfigError, ManifestError

POSITIVE_TAGS = frozenset({"anger", "frustration"})
IGNORED_TAGS = frozenset({"unknown"})


class Label(enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    IGNORED = "ignored"


def map_label(emotion_tag: str) -> Label:
    """Case-insensitive tag mapping: anger/frustration -> positive,
    unknown -> ignored, everything else -> negative."""
    tag = emotion_tag.strip().lower()
    if tag in POSITIVE_TAGS:
        return Label.POSITIVE
    if tag in IGNORED_TAGS:
        return Label.IGNORED
    return Label.NEGATIVE


SPLITS = ("train", "val", "test")
_REQUIRED_FIELDS = ("audio_path", "emotion_tag", "dataset_name", "split")


@dataclass
class ManifestEntry:
    audio_path: str
    emotion_tag: str
    dataset_name: str
    split: str
    session: str | None = None
    duration_s: float | None = None
    extra: dict = field(default_factory=dict)
    line: int | None = None  # manifest line number, for error reporting

    @property
    def label(self) -> Label:
        return map_label(self.emotion_tag)

    def to_dict(self) -> dict:
        d = {
            "audio_path": self.audio_path,
            "emotion_tag": self.emotion_tag,
            "dataset_name": self.dataset_name,
            "split": self.split,
        }
        if self.session is not None:
            d["session"] = self.session
        if self.duration_s is not None:
            d["duration_s"] = self.duration_s
        d.update(self.extra)
        return d


def load_manifest(path) -> list[ManifestEntry]:
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"malformed JSON ({exc.msg})", line=lineno) from exc
            if not isinstance(obj, dict):
                raise ManifestError("expected a JSON object", line=lineno)
            for field_name in _REQUIRED_FIELDS:
                if field_name not in obj:
                    raise ManifestError(
                        f"missing required field '{field_name}'", line=lineno
                    )
            if obj["split"] not in SPLITS:
                raise ManifestError(
                    f"split must be one of {SPLITS}, got {obj['split']!r}", line=lineno
                )
            known = {k: obj[k] for k in (*_REQUIRED_FIELDS, "session", "duration_s") if k in obj}
            extra = {k: v for k, v in obj.items() if k not in known}
            entries.append(ManifestEntry(**known, extra=extra, line=lineno))
    return entries


def save_manifest(entries, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(json.dumps(entry.to_dict()) + "\n")


def assign_splits_by_session(entries, train=("1", "2", "3"), val=("4",), test=("5",)):
    """Set each entry's split from its session using the 1-3/4/5 rule."""
    lookup = {**{s: "train" for s in train}, **{s: "val" for s in val}, **{s: "test" for s in test}}
    out = []
    for entry in entries:
        if entry.session is None:
            raise ConfigError(f"entry {entry.audio_path} has no session field")
        session = str(entry.session)
        if session not in lookup:
            raise ConfigError(f"session {session!r} not covered by the split rule")
        out.append(
            ManifestEntry(
                audio_path=entry.audio_path,
                emotion_tag=entry.emotion_tag,
                dataset_name=entry.dataset_name,
                split=lookup[session],
                session=entry.session,
                duration_s=entry.duration_s,
                extra=dict(entry.extra),
            )
        )
    return out


def build_manifest_from_tree(root, dataset_name=None, split="train") -> list[ManifestEntry]:
    """Scan a `<root>/<emotion_tag>/<file>.wav` tree into manifest entries."""
    root = Path(root)
    if dataset_name is None:
        dataset_name = root.name
    entries = []
    for tag_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for wav in sorted(tag_dir.glob("*.wav")):
            clip = read_wav_file(wav)
            entries.append(
                ManifestEntry(
                    audio_path=str(wav.relative_to(root)),
                    emotion_tag=tag_dir.name,
                    dataset_name=dataset_name,
                    split=split,
                    duration_s=round(clip.duration_s, 6),
                )
            )
    return entries


class ClipLoader:
    """Reads, resamples to 16 kHz, and amplitude-normalizes utterances,
    caching the result by path."""

    def __init__(self, root=None, basis: str = "rms", target_rate: int = TARGET_RATE):
        self.root = Path(root) if root is not None else None
        self.basis = basis
        self.target_rate = target_rate
        self._cache: dict[str, AudioClip] = {}

    def resolve(self, path) -> Path:
        p = Path(path)
        if not p.is_absolute() and self.root is not None:
            p = self.root / p
        return p

    def load(self, path) -> AudioClip:
        key = str(path)
        clip = self._cache.get(key)
        if clip is None:
            clip = read_wav_file(self.resolve(path))
            clip = resample(clip, self.target_rate)
            clip = normalize_and_scale(clip, basis=self.basis)
            self._cache[key] = clip
        return clip


class BalancedSampler:
    """Draws 5+5 class-balanced minibatches of augmented training segments.

    Utterances are partitioned into positive/negative pools once (ignored
    labels and clips below the minimum duration are dropped); each batch
    draws uniformly with replacement from both pools, so scarce positives
    get oversampled.
    """

    def __init__(self, entries, loader: ClipLoader, window: WindowSpec = WindowSpec()):
        self.loader = loader
        self.window = window
        min_samples = int(round(window.min_content_s * loader.target_rate))
        self.positives = []
        self.negatives = []
        self.skipped_ignored = 0
        self.skipped_short = 0
        for entry in entries:
            label = entry.label
            if label is Label.IGNORED:
                self.skipped_ignored += 1
                continue
            if len(loader.load(entry.audio_path).samples) < min_samples:
                self.skipped_short += 1
                continue
            (self.positives if label is Label.POSITIVE else self.negatives).append(entry)
        if not self.positives:
            raise ConfigError("positive pool is empty: no usable anger/frustration utterances")
        if not self.negatives:
            raise ConfigError("negative pool is empty: no usable negative utterances")

    def sample(self, rng, augment: AugmentConfig | None = None, per_class: int = 5):
        """Returns (x, y): float32 (2*per_class, 1, segment) and int labels."""
        picks = []
        for pool, label in ((self.positives, 1), (self.negatives, 0)):
            idx = rng.integers(0, len(pool), size=per_class)
            picks.extend((pool[int(i)], label) for i in idx)
        segments = np.empty((len(picks), 1, SEGMENT_SAMPLES), dtype=np.float32)
        labels = np.empty(len(picks), dtype=np.int64)
        for row, (entry, label) in enumerate(picks):
            clip = self.loader.load(entry.audio_path)
            segment = random_segment(clip, rng, self.window)
            if augment is not None and augment.enabled:
                segment = augment_segment(segment, augment, rng)
            segments[row, 0] = segment
            labels[row] = label
        order = rng.permutation(len(picks))
        return segments[order], labels[order]


def sample_balanced_batch(entries, rng, *, loader: ClipLoader,
                          augment: AugmentConfig | None = None, per_class: int = 5):
    """One-shot balanced batch from raw manifest entries (builds a sampler)."""
    return BalancedSampler(entries, loader).sample(rng, augment=augment, per_class=per_class)


# -- synthetic corpus ----------------------------------------------------------


@dataclass
class SyntheticSpec:
    """Desk-scale separable corpus: positives are harmonic tone stacks,
    negatives are band-limited noise bursts; both amplitude-randomized."""

    train_positive: int = 50
    train_negative: int = 50
    val_positive: int = 20
    val_negative: int = 20
    test_positive: int = 0
    test_negative: int = 0
    duration_range: tuple[float, float] = (1.2, 3.0)
    f0_range: tuple[float, float] = (130.0, 300.0)
    harmonics: int = 6
    noise_band: tuple[float, float] = (500.0, 4000.0)
    amplitude_range: tuple[float, float] = (0.1, 0.9)
    sample_rate: int = TARGET_RATE

    def counts(self):
        return {
            "train": (self.train_positive, self.train_negative),
            "val": (self.val_positive, self.val_negative),
            "test": (self.test_positive, self.test_negative),
        }


_POSITIVE_TAG_CYCLE = ("anger", "frustration")
_NEGATIVE_TAG_CYCLE = ("neutral", "happiness", "sadness", "excitement")


def generate_synthetic_dataset(spec: SyntheticSpec, out_dir, rng):
    """Write WAVs plus a manifest under `out_dir`; returns (entries, manifest_path).

    Fully deterministic given the rng seed, so corpora are byte-reproducible.
    """
    out_dir = Path(out_dir)
    wav_dir = out_dir / "wavs"
    wav_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for split, (n_pos, n_neg) in spec.counts().items():
        for kind, count in (("pos", n_pos), ("neg", n_neg)):
            for i in range(count):
                duration = float(rng.uniform(*spec.duration_range))
                n = int(round(duration * spec.sample_rate))
                if kind == "pos":
                    samples = _tone_stack(rng, n, spec)
                    tag = _POSITIVE_TAG_CYCLE[i % len(_POSITIVE_TAG_CYCLE)]
                else:
                    samples = _noise_burst(rng, n, spec)
                    tag = _NEGATIVE_TAG_CYCLE[i % len(_NEGATIVE_TAG_CYCLE)]
                samples *= rng.uniform(*spec.amplitude_range)
                name = f"{split}_{kind}_{i:03d}.wav"
                write_wav(wav_dir / name, samples, spec.sample_rate)
                entries.append(
                    ManifestEntry(
                        audio_path=f"wavs/{name}",
                        emotion_tag=tag,
                        dataset_name="synthetic",
                        split=split,
                        duration_s=round(n / spec.sample_rate, 6),
                    )
                )
    manifest_path = out_dir / "manifest.jsonl"
    save_manifest(entries, manifest_path)
    return entries, manifest_path


def _tone_stack(rng, n, spec: SyntheticSpec) -> np.ndarray:
    f0 = rng.uniform(*spec.f0_range)
    t = np.arange(n) / spec.sample_rate
    out = np.zeros(n)
    for k in range(1, spec.harmonics + 1):
        phase = rng.uniform(0.0, 2.0 * np.pi)
        out += np.sin(2.0 * np.pi * k * f0 * t + phase) / k
    return out / np.max(np.abs(out))


def _noise_burst(rng, n, spec: SyntheticSpec) -> np.ndarray:
    noise = rng.standard_normal(n)
    freqs = np.fft.rfftfreq(n, d=1.0 / spec.sample_rate)
    lo, hi = spec.noise_band
    spectrum = np.fft.rfft(noise)
    spectrum[(freqs < lo) | (freqs > hi)] = 0.0
    banded = np.fft.irfft(spectrum, n=n)
    # slow random envelope so the noise arrives in bursts
    knots = rng.uniform(0.2, 1.0, size=max(4, n // 3200))
    envelope = np.interp(np.linspace(0, len(knots) - 1, n), np.arange(len(knots)), knots)
    out = banded * envelope
    return out / np.max(np.abs(out))
