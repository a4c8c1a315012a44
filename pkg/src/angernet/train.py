"""Training loop: balanced batches, Adam at lr 5e-3, cross-entropy,
validation by AU-ROC every `val_every` minibatches, and best-checkpoint
selection. Optionally initializes the first k layers from a weight store
and freezes a prefix of layers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .audio import WindowSpec
from .augment import AugmentConfig
from .data import BalancedSampler, ClipLoader
from .errors import ConfigError, NumericError
from .evaluation import roc_auc, score_dataset
from .model import build_model, default_config, load_pretrained, save_checkpoint
from .nn import Adam, softmax_cross_entropy
from .weights import load_store


@dataclass
class TrainConfig:
    lr: float = 5e-3
    batch_size: int = 10  # split evenly between positives and negatives
    val_every: int = 200
    max_steps: int = 5000
    dropout: float = 0.5
    transfer_store: str | None = None
    load_first_k: int = 3
    freeze_first_k: int = 2
    seed: int = 0
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    window: WindowSpec = field(default_factory=WindowSpec)
    conv4_channels: int = 16
    norm_basis: str = "rms"
    stop_at_val_auc: float | None = None  # optional early stop on validation AUC

    def __post_init__(self):
        if self.val_every < 1:
            raise ConfigError(f"val_every must be >= 1, got {self.val_every}")
        if self.batch_size < 2 or self.batch_size % 2:
            raise ConfigError(f"batch_size must be even and >= 2, got {self.batch_size}")
        if self.max_steps < 1:
            raise ConfigError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.transfer_store is not None and not (
            0 <= self.freeze_first_k <= self.load_first_k <= 5
        ):
            raise ConfigError(
                f"transfer requires freeze_first_k <= load_first_k <= 5, got "
                f"freeze={self.freeze_first_k}, load={self.load_first_k}"
            )

    def to_dict(self) -> dict:
        d = {
            "lr": self.lr,
            "batch_size": self.batch_size,
            "val_every": self.val_every,
            "max_steps": self.max_steps,
            "dropout": self.dropout,
            "transfer_store": self.transfer_store,
            "load_first_k": self.load_first_k,
            "freeze_first_k": self.freeze_first_k,
            "seed": self.seed,
            "conv4_channels": self.conv4_channels,
            "norm_basis": self.norm_basis,
            "stop_at_val_auc": self.stop_at_val_auc,
            "augment": {
                "stretch_range": list(self.augment.stretch_range),
                "pitch_quarter_steps": list(self.augment.pitch_quarter_steps),
                "noise_sigma_frac": list(self.augment.noise_sigma_frac),
                "enabled": self.augment.enabled,
                "continuous_pitch": self.augment.continuous_pitch,
            },
            "window": {
                "duration_s": self.window.duration_s,
                "hop_s": self.window.hop_s,
                "min_content_s": self.window.min_content_s,
            },
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        augment = d.pop("augment", None)
        window = d.pop("window", None)
        cfg = cls(**d)
        if augment is not None:
            cfg = replace(
                cfg,
                augment=AugmentConfig(
                    stretch_range=tuple(augment.get("stretch_range", (0.9, 1.1))),
                    pitch_quarter_steps=tuple(augment.get("pitch_quarter_steps", (-5, 5))),
                    noise_sigma_frac=tuple(augment.get("noise_sigma_frac", (0.0, 0.005))),
                    enabled=augment.get("enabled", True),
                    continuous_pitch=augment.get("continuous_pitch", False),
                ),
            )
        if window is not None:
            cfg = replace(cfg, window=WindowSpec(**window))
        return cfg


@dataclass
class TrainState:
    step: int = 0
    best_val_auc: float | None = None
    best_checkpoint: Path | None = None
    loss_history: list[float] = field(default_factory=list)
    val_history: list[tuple[int, float, bool]] = field(default_factory=list)


def validate(net, val_entries, *, loader: ClipLoader,
             window: WindowSpec = WindowSpec()) -> float:
    """Eval-mode sliding-window AU-ROC over a validation split."""
    scored, _failures = score_dataset(net, val_entries, loader=loader, window_spec=window)
    curve = roc_auc([s.p_anger for s in scored], [s.label for s in scored])
    return curve.auc


def run_training(cfg: TrainConfig, entries, *, root=None, out_dir=None):
    """Train on the manifest's train split, validating on its val split.

    Returns (TrainState, net). With `out_dir` set, writes `best.ckpt`
    whenever validation AU-ROC improves and a JSON-lines training log.
    Fully reproducible given cfg.seed (single-threaded).
    """
    train_entries = [e for e in entries if e.split == "train"]
    val_entries = [e for e in entries if e.split == "val"]
    if not train_entries:
        raise ConfigError("manifest has no train entries")
    if not val_entries:
        raise ConfigError("manifest has no val entries")

    rng = np.random.default_rng(cfg.seed)
    net = build_model(default_config(cfg.conv4_channels, cfg.dropout), rng)
    if cfg.transfer_store is not None:
        store, _trailer = load_store(cfg.transfer_store)
        load_pretrained(net, store, cfg.load_first_k)
    net.set_frozen(cfg.freeze_first_k)

    optimizer = Adam(lr=cfg.lr)
    loader = ClipLoader(root=root, basis=cfg.norm_basis)
    sampler = BalancedSampler(train_entries, loader, window=cfg.window)
    state = TrainState()

    out_dir = Path(out_dir) if out_dir is not None else None
    log_fh = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_fh = open(out_dir / "train_log.jsonl", "w", encoding="utf-8")

    def log(record):
        if log_fh is not None:
            log_fh.write(json.dumps(record) + "\n")

    log({"event": "config", **cfg.to_dict()})
    try:
        for step in range(1, cfg.max_steps + 1):
            x, y = sampler.sample(rng, cfg.augment, per_class=cfg.batch_size // 2)
            logits = net.forward(x, training=True, rng=rng)
            loss, _probs, dlogits = softmax_cross_entropy(logits, y)
            if not math.isfinite(loss):
                raise NumericError(f"non-finite training loss at step {step}")
            Adam.zero_grad(net.parameters())
            net.backward(dlogits)
            optimizer.step(net.trainable_parameters())
            state.step = step
            state.loss_history.append(loss)
            log({"step": step, "loss": loss})

            if step % cfg.val_every == 0 or step == cfg.max_steps:
                auc = validate(net, val_entries, loader=loader, window=cfg.window)
                improved = state.best_val_auc is None or auc > state.best_val_auc
                if improved:
                    state.best_val_auc = auc
                    if out_dir is not None:
                        state.best_checkpoint = out_dir / "best.ckpt"
                        save_checkpoint(net, state.best_checkpoint, optimizer, step)
                state.val_history.append((step, auc, improved))
                log({"step": step, "val_auc": auc, "improved": improved})
                if cfg.stop_at_val_auc is not None and auc >= cfg.stop_at_val_auc:
                    break
    finally:
        if log_fh is not None:
            log_fh.close()
    return state, net
