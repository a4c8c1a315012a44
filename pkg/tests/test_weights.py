"""ANW1 weight/checkpoint serialization."""

import numpy as np
import pytest

from angernet.errors import WeightFormatError
from angernet.model import (
    build_model,
    default_config,
    load_checkpoint,
    save_checkpoint,
    save_weights,
    set_frozen,
)
from angernet.nn import Adam, softmax_cross_entropy
from angernet.weights import WeightStore, decode_store, encode_store, load_store, save_store


@pytest.fixture
def net():
    return build_model(default_config(), np.random.default_rng(0))


def test_magic_and_layout():
    store = WeightStore()
    store.add("a", np.arange(6, dtype=np.float32).reshape(2, 3))
    blob = encode_store(store)
    assert blob[:4] == bytes([0x41, 0x4E, 0x57, 0x31])  # "ANW1"
    assert int.from_bytes(blob[4:8], "little") == 1  # version
    assert int.from_bytes(blob[8:12], "little") == 1  # tensor count


def test_roundtrip_bytes_identical(tmp_path, net):
    path1, path2 = tmp_path / "a.anw", tmp_path / "b.anw"
    save_store(save_weights(net), path1)
    store, trailer = load_store(path1)
    assert trailer is None
    save_store(store, path2)
    assert path1.read_bytes() == path2.read_bytes()


def test_default_store_tensor_inventory(net):
    store = save_weights(net)
    # 5 conv layers x (weight, bias) + 4 batch-norm layers x 4 buffers
    assert len(store) == 26
    names = store.names()
    for i in range(1, 6):
        assert f"layer{i}.conv.weight" in names
        assert f"layer{i}.conv.bias" in names
    for i in range(1, 5):
        for field in ("gamma", "beta", "running_mean", "running_var"):
            assert f"layer{i}.bn.{field}" in names
    assert not any(name.startswith("layer5.bn") for name in names)


def test_truncated_by_one_byte(net):
    blob = encode_store(save_weights(net))
    with pytest.raises(WeightFormatError, match="truncated"):
        decode_store(blob[:-1])


def test_bad_magic():
    with pytest.raises(WeightFormatError, match="magic"):
        decode_store(b"NOPE" + b"\x00" * 16)


def test_version_mismatch():
    store = WeightStore()
    store.add("x", np.zeros(1, dtype=np.float32))
    blob = bytearray(encode_store(store))
    blob[4] = 9
    with pytest.raises(WeightFormatError, match="version"):
        decode_store(bytes(blob))


def test_duplicate_names_rejected():
    store = WeightStore()
    store.add("x", np.zeros(1, dtype=np.float32))
    with pytest.raises(WeightFormatError, match="duplicate"):
        store.add("x", np.zeros(1, dtype=np.float32))


def test_scalar_rank_zero_tensor_roundtrip():
    store = WeightStore()
    store.add("scalar", np.float32(3.5))
    decoded, _ = decode_store(encode_store(store))
    assert decoded["scalar"].shape == ()
    assert decoded["scalar"] == np.float32(3.5)


class TestCheckpoint:
    def _checkpoint_after_steps(self, tmp_path, steps=3):
        net = build_model(default_config(), np.random.default_rng(1))
        set_frozen(net, 2)
        optimizer = Adam()
        rng = np.random.default_rng(2)
        for _ in range(steps):
            x = rng.normal(size=(4, 1, 2048)).astype(np.float32)
            logits = net.forward(x, training=True, rng=rng)
            _l, _p, d = softmax_cross_entropy(logits, rng.integers(0, 2, size=4))
            Adam.zero_grad(net.parameters())
            net.backward(d)
            optimizer.step(net.trainable_parameters())
        path = tmp_path / "model.ckpt"
        save_checkpoint(net, path, optimizer, step=steps)
        return net, optimizer, path

    def test_roundtrip_bytes_identical(self, tmp_path):
        _net, _opt, path = self._checkpoint_after_steps(tmp_path)
        ckpt = load_checkpoint(path)
        path2 = tmp_path / "again.ckpt"
        save_checkpoint(ckpt.net, path2, ckpt.optimizer, step=ckpt.step)
        assert path.read_bytes() == path2.read_bytes()

    def test_restores_weights_freeze_mask_and_adam(self, tmp_path):
        net, optimizer, path = self._checkpoint_after_steps(tmp_path)
        ckpt = load_checkpoint(path)
        assert ckpt.step == 3
        assert ckpt.net.freeze_first_k == 2
        for (name_a, ta), (_name_b, tb) in zip(
            net.named_tensors(), ckpt.net.named_tensors()
        ):
            assert np.array_equal(ta, tb), name_a
        assert set(ckpt.optimizer.states) == set(optimizer.states)
        for name, state in optimizer.states.items():
            restored = ckpt.optimizer.states[name]
            assert restored.step == state.step
            assert np.array_equal(restored.m, state.m)
            assert np.array_equal(restored.v, state.v)

    def test_truncation_detected(self, tmp_path):
        _net, _opt, path = self._checkpoint_after_steps(tmp_path)
        blob = path.read_bytes()
        with pytest.raises(WeightFormatError):
            decode_store(blob[:-1])

    def test_missing_trailer_rejected(self, tmp_path, net):
        path = tmp_path / "plain.anw"
        save_store(save_weights(net), path)
        with pytest.raises(WeightFormatError, match="trailer"):
            load_checkpoint(path)

    def test_trailer_offset_validated(self, tmp_path):
        _net, _opt, path = self._checkpoint_after_steps(tmp_path)
        blob = bytearray(path.read_bytes())
        blob[-8:] = (123).to_bytes(8, "little")
        with pytest.raises(WeightFormatError, match="offset"):
            decode_store(bytes(blob))
