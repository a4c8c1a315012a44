"""The 5-layer fully-convolutional anger detector.

Default architecture (kernel/stride/padding per layer, two 8x8 max-pool
stages, dropout after layer 4, no batch norm on the head layer):

    L1 conv(1 -> 32,  k=64, s=2, p=32) + BN + ReLU + maxpool(8, 8)
    L2 conv(32 -> 64, k=32, s=2, p=16) + BN + ReLU + maxpool(8, 8)
    L3 conv(64 -> 128, k=16, s=2, p=8) + BN + ReLU
    L4 conv(128 -> 16, k=8,  s=2, p=4) + BN + ReLU + dropout(0.5)
    L5 conv(16 -> 2,  k=2,  s=1, p=0)
    head: global average pool over time -> 2 logits -> softmax

This totals 215,826 trainable parameters; widening layer 4 back to 256
filters gives 463,266.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputTooShortError, ShapeError, WeightFormatError
from .nn import Adam, AdamState, BatchNorm1d, Conv1d, Dropout, GlobalAvgPool, MaxPool1d, ReLU
from .weights import WeightStore, load_store, save_store


@dataclass
class LayerSpec:
    """One conv block: convolution plus optional batch norm / pool / dropout."""

    out_channels: int
    kernel: int
    stride: int
    padding: int
    has_batch_norm: bool = True
    pool_window: int | None = None
    pool_stride: int | None = None
    dropout_rate: float | None = None

    def __post_init__(self):
        if self.kernel < 1 or self.stride < 1 or self.padding < 0:
            raise ConfigError(f"bad layer geometry: {self}")
        if (self.pool_window is None) != (self.pool_stride is None):
            raise ConfigError("pool_window and pool_stride must be set together")
        if self.dropout_rate is not None and not (0.0 <= self.dropout_rate < 1.0):
            raise ConfigError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")


@dataclass
class ModelConfig:
    layers: list[LayerSpec] = field(default_factory=list)
    input_channels: int = 1
    class_count: int = 2

    def __post_init__(self):
        if not self.layers:
            return
        if self.layers[-1].out_channels != self.class_count:
            raise ConfigError(
                f"last layer must emit {self.class_count} channels, "
                f"got {self.layers[-1].out_channels}"
            )

    def to_dict(self) -> dict:
        return {
            "input_channels": self.input_channels,
            "class_count": self.class_count,
            "layers": [
                {
                    "out_channels": s.out_channels,
                    "kernel": s.kernel,
                    "stride": s.stride,
                    "padding": s.padding,
                    "has_batch_norm": s.has_batch_norm,
                    "pool_window": s.pool_window,
                    "pool_stride": s.pool_stride,
                    "dropout_rate": s.dropout_rate,
                }
                for s in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            layers=[LayerSpec(**spec) for spec in d["layers"]],
            input_channels=d.get("input_channels", 1),
            class_count=d.get("class_count", 2),
        )


def default_config(conv4_channels: int = 16, dropout_rate: float = 0.5) -> ModelConfig:
    """The standard architecture; `conv4_channels=256` restores the wide layer 4."""
    return ModelConfig(
        layers=[
            LayerSpec(32, 64, 2, 32, True, 8, 8, None),
            LayerSpec(64, 32, 2, 16, True, 8, 8, None),
            LayerSpec(128, 16, 2, 8, True, None, None, None),
            LayerSpec(conv4_channels, 8, 2, 4, True, None, None, dropout_rate),
            LayerSpec(2, 2, 1, 0, False, None, None, None),
        ]
    )


class _Block:
    """Conv + optional BN/pool/dropout, with a shared freeze flag."""

    def __init__(self, index, in_channels, spec: LayerSpec, rng, dtype):
        self.index = index
        self.spec = spec
        self.frozen = False
        prefix = f"layer{index}"
        self.conv = Conv1d(
            in_channels, spec.out_channels, spec.kernel, spec.stride, spec.padding,
            rng=rng, dtype=dtype,
        )
        self.conv.weight.name = f"{prefix}.conv.weight"
        self.conv.bias.name = f"{prefix}.conv.bias"
        self.bn = None
        if spec.has_batch_norm:
            self.bn = BatchNorm1d(spec.out_channels, dtype=dtype)
            self.bn.gamma.name = f"{prefix}.bn.gamma"
            self.bn.beta.name = f"{prefix}.bn.beta"
        self.relu = ReLU()
        self.pool = None
        if spec.pool_window is not None:
            self.pool = MaxPool1d(spec.pool_window, spec.pool_stride)
        self.dropout = Dropout(spec.dropout_rate) if spec.dropout_rate is not None else None

    def parameters(self):
        params = self.conv.parameters()
        if self.bn is not None:
            params += self.bn.parameters()
        return params

    def set_frozen(self, frozen: bool):
        self.frozen = frozen
        for p in self.parameters():
            p.frozen = frozen
        if self.bn is not None:
            self.bn.freeze_buffers = frozen

    def forward(self, x, training, rng):
        out = self.conv.forward(x, training=training)
        if self.bn is not None:
            # Frozen blocks keep eval-mode statistics even while training.
            out = self.bn.forward(out, training=training and not self.frozen)
        out = self.relu.forward(out)
        if self.pool is not None:
            out = self.pool.forward(out)
        if self.dropout is not None:
            out = self.dropout.forward(out, training=training, rng=rng)
        return out

    def backward(self, grad, need_input_grad):
        if self.dropout is not None:
            grad = self.dropout.backward(grad)
        if self.pool is not None:
            grad = self.pool.backward(grad)
        grad = self.relu.backward(grad)
        if self.bn is not None:
            grad = self.bn.backward(grad)
        self.conv.needs_input_grad = need_input_grad
        return self.conv.backward(grad)


class AngerNet:
    """Layer stack with a freeze mask; forward in train or eval mode plus
    an explicit backward pass for the training loop."""

    def __init__(self, config: ModelConfig, rng=None, dtype=np.float32):
        if not config.layers:
            raise ConfigError("model config has no layers")
        self.config = config
        self.dtype = dtype
        self.blocks = []
        in_channels = config.input_channels
        for i, spec in enumerate(config.layers, start=1):
            self.blocks.append(_Block(i, in_channels, spec, rng, dtype))
            in_channels = spec.out_channels
        self.gap = GlobalAvgPool()
        self.freeze_first_k = 0

    # -- structure ---------------------------------------------------------

    def parameters(self):
        return [p for block in self.blocks for p in block.parameters()]

    def trainable_parameters(self):
        return [p for p in self.parameters() if not p.frozen]

    def count_parameters(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))

    def set_frozen(self, first_k: int) -> None:
        if not (0 <= first_k <= len(self.blocks)):
            raise ConfigError(f"cannot freeze {first_k} of {len(self.blocks)} layers")
        self.freeze_first_k = first_k
        for i, block in enumerate(self.blocks):
            block.set_frozen(i < first_k)

    # -- length algebra ----------------------------------------------------

    def trace_lengths(self, length: int) -> list[int]:
        """Per-stage output lengths; raises naming the first collapsing stage."""
        lengths = []
        current = length
        for block in self.blocks:
            out = block.conv.out_length(current)
            if out is None or out < 1:
                raise InputTooShortError(
                    f"input of {length} samples collapses at layer{block.index} conv "
                    f"(minimum usable input is {self.min_input_length()} samples)"
                )
            current = out
            lengths.append(current)
            if block.pool is not None:
                out = block.pool.out_length(current)
                if out is None:
                    raise InputTooShortError(
                        f"input of {length} samples collapses at layer{block.index} pool "
                        f"(minimum usable input is {self.min_input_length()} samples)"
                    )
                current = out
                lengths.append(current)
        return lengths

    def min_input_length(self) -> int:
        """Smallest input length that survives every stage (lengths are
        monotone in the input, so binary search applies)."""
        lo, hi = 1, 1
        while not self._survives(hi):
            hi *= 2
            if hi > 1 << 24:
                raise ConfigError("no feasible input length below 2^24 samples")
        while lo < hi:
            mid = (lo + hi) // 2
            if self._survives(mid):
                hi = mid
            else:
                lo = mid + 1
        return lo

    def _survives(self, length: int) -> bool:
        current = length
        for block in self.blocks:
            out = block.conv.out_length(current)
            if out is None or out < 1:
                return False
            current = out
            if block.pool is not None:
                out = block.pool.out_length(current)
                if out is None:
                    return False
                current = out
        return True

    # -- forward / backward -------------------------------------------------

    def forward(self, x, training=False, rng=None):
        """Run the stack on (N, C, L) input; returns (N, class_count) logits."""
        if x.ndim != 3:
            raise ShapeError(f"expected (batch, channels, length) input, got {x.shape}")
        self.trace_lengths(x.shape[2])
        out = x
        for block in self.blocks:
            out = block.forward(out, training, rng)
        pooled = self.gap.forward(out)
        return pooled[:, :, 0]

    def backward(self, dlogits):
        """Backpropagate from d(logits); stops at the frozen prefix."""
        grad = self.gap.backward(dlogits[:, :, None])
        stop = self.freeze_first_k
        for i in range(len(self.blocks) - 1, stop - 1, -1):
            grad = self.blocks[i].backward(grad, need_input_grad=i > stop)
        return grad

    # -- serialization -------------------------------------------------------

    def named_tensors(self):
        """All stored arrays (parameters plus batch-norm running buffers)."""
        out = []
        for block in self.blocks:
            prefix = f"layer{block.index}"
            out.append((f"{prefix}.conv.weight", block.conv.weight.data))
            out.append((f"{prefix}.conv.bias", block.conv.bias.data))
            if block.bn is not None:
                out.append((f"{prefix}.bn.gamma", block.bn.gamma.data))
                out.append((f"{prefix}.bn.beta", block.bn.beta.data))
                out.append((f"{prefix}.bn.running_mean", block.bn.running_mean))
                out.append((f"{prefix}.bn.running_var", block.bn.running_var))
        return out

    def _assign_tensor(self, name: str, values: np.ndarray):
        layer_name, kind, field_name = name.split(".")
        block = self.blocks[int(layer_name.removeprefix("layer")) - 1]
        if kind == "conv":
            target = {"weight": block.conv.weight, "bias": block.conv.bias}[field_name]
        else:
            if block.bn is None:
                raise WeightFormatError(f"{name}: layer has no batch norm")
            if field_name == "running_mean":
                if values.shape != block.bn.running_mean.shape:
                    raise WeightFormatError(
                        f"{name}: shape {values.shape} != {block.bn.running_mean.shape}"
                    )
                block.bn.running_mean = values.astype(self.dtype)
                return
            if field_name == "running_var":
                if values.shape != block.bn.running_var.shape:
                    raise WeightFormatError(
                        f"{name}: shape {values.shape} != {block.bn.running_var.shape}"
                    )
                block.bn.running_var = values.astype(self.dtype)
                return
            target = {"gamma": block.bn.gamma, "beta": block.bn.beta}[field_name]
        if values.shape != target.data.shape:
            raise WeightFormatError(f"{name}: shape {values.shape} != {target.data.shape}")
        target.data = values.astype(self.dtype)


def build_model(config: ModelConfig | None = None, rng=None) -> AngerNet:
    """Assemble a network with fan-in uniform init (weights in
    +-sqrt(1/(in_channels*kernel)), biases 0, BN gamma 1 / beta 0)."""
    if config is None:
        config = default_config()
    if rng is None:
        rng = np.random.default_rng(0)
    return AngerNet(config, rng=rng)


def count_parameters(net: AngerNet) -> int:
    return net.count_parameters()


def parameter_count(config: ModelConfig) -> int:
    """Learned-parameter total straight from the layer table (conv weights
    and biases plus BN gamma/beta; running buffers excluded)."""
    total = 0
    in_channels = config.input_channels
    for spec in config.layers:
        total += spec.out_channels * in_channels * spec.kernel + spec.out_channels
        if spec.has_batch_norm:
            total += 2 * spec.out_channels
        in_channels = spec.out_channels
    return total


def forward_scores(net: AngerNet, clip, mode="eval", rng=None):
    """Score one clip; returns (p_anger, logits).

    `clip` is a 1-D sample array or a (1, L) tensor. p_anger is the softmax
    probability of class 1.
    """
    samples = np.asarray(clip, dtype=net.dtype)
    if samples.ndim == 2:
        if samples.shape[0] != 1:
            raise ShapeError(f"expected a single-channel clip, got shape {samples.shape}")
        samples = samples[0]
    if samples.ndim != 1:
        raise ShapeError(f"expected a 1-D clip, got shape {samples.shape}")
    logits = net.forward(samples[None, None, :], training=mode == "train", rng=rng)
    shifted = logits[0] - logits[0].max()
    exp = np.exp(shifted.astype(np.float64))
    probs = exp / exp.sum()
    return float(probs[1]), logits[0]


def load_pretrained(net: AngerNet, store: WeightStore, first_k: int) -> list[str]:
    """Overwrite layers 1..first_k from the store; returns the loaded names.

    Missing tensors are reported all at once; shapes must match exactly.
    """
    if not (0 <= first_k <= len(net.blocks)):
        raise ConfigError(f"cannot load {first_k} of {len(net.blocks)} layers")
    wanted = [name for name, _ in net.named_tensors() if _layer_index(name) <= first_k]
    missing = [name for name in wanted if name not in store]
    if missing:
        raise WeightFormatError(f"store is missing tensors: {', '.join(missing)}")
    for name in wanted:
        net._assign_tensor(name, store[name])
    return wanted


def _layer_index(tensor_name: str) -> int:
    return int(tensor_name.split(".", 1)[0].removeprefix("layer"))


def set_frozen(net: AngerNet, first_k: int) -> None:
    net.set_frozen(first_k)


def save_weights(net: AngerNet) -> WeightStore:
    store = WeightStore()
    for name, values in net.named_tensors():
        store.add(name, values)
    return store


def save_weights_file(net: AngerNet, path) -> None:
    save_store(save_weights(net), path)


def load_weights_file(path) -> AngerNet:
    store, trailer = load_store(path)
    if trailer is not None:
        return checkpoint_from_store(store, trailer).net
    raise WeightFormatError(
        "file has no metadata trailer; use load_pretrained with an explicit config"
    )


@dataclass
class Checkpoint:
    net: AngerNet
    optimizer: Adam
    step: int


def save_checkpoint(net: AngerNet, path, optimizer: Adam | None = None, step: int = 0) -> None:
    """Write weights, running buffers, freeze mask, and optimizer state."""
    store = save_weights(net)
    optimizer = optimizer if optimizer is not None else Adam()
    steps = {}
    for name in sorted(optimizer.states):
        state = optimizer.states[name]
        store.add(f"optim.{name}.m", state.m)
        store.add(f"optim.{name}.v", state.v)
        steps[name] = state.step
    trailer = {
        "type": "checkpoint",
        "config": net.config.to_dict(),
        "freeze_first_k": net.freeze_first_k,
        "step": step,
        "optimizer": {
            "lr": optimizer.lr,
            "beta1": optimizer.beta1,
            "beta2": optimizer.beta2,
            "epsilon": optimizer.epsilon,
            "steps": steps,
        },
    }
    save_store(store, path, trailer)


def checkpoint_from_store(store: WeightStore, trailer: dict) -> Checkpoint:
    if trailer.get("type") != "checkpoint":
        raise WeightFormatError(f"unexpected trailer type {trailer.get('type')!r}")
    config = ModelConfig.from_dict(trailer["config"])
    net = AngerNet(config)
    for name, _ in net.named_tensors():
        if name not in store:
            raise WeightFormatError(f"checkpoint is missing tensor {name}")
        net._assign_tensor(name, store[name])
    net.set_frozen(int(trailer.get("freeze_first_k", 0)))
    opt_meta = trailer["optimizer"]
    optimizer = Adam(
        lr=opt_meta["lr"], beta1=opt_meta["beta1"], beta2=opt_meta["beta2"],
        epsilon=opt_meta["epsilon"],
    )
    for name, step_count in opt_meta["steps"].items():
        m_name, v_name = f"optim.{name}.m", f"optim.{name}.v"
        if m_name not in store or v_name not in store:
            raise WeightFormatError(f"checkpoint is missing optimizer tensors for {name}")
        optimizer.states[name] = AdamState(
            m=store[m_name].copy(), v=store[v_name].copy(), step=int(step_count),
            lr=opt_meta["lr"], beta1=opt_meta["beta1"], beta2=opt_meta["beta2"],
            epsilon=opt_meta["epsilon"],
        )
    return Checkpoint(net=net, optimizer=optimizer, step=int(trailer["step"]))


def load_checkpoint(path) -> Checkpoint:
    store, trailer = load_store(path)
    if trailer is None:
        raise WeightFormatError("file has no checkpoint trailer")
    return checkpoint_from_store(store, trailer)
