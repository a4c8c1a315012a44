"""Architecture assembly, parameter counting, variable-length scoring,
transfer loading, and freezing."""

import numpy as np
import pytest

from angernet.errors import ConfigError, InputTooShortError, WeightFormatError
from angernet.model import (
    AngerNet,
    LayerSpec,
    ModelConfig,
    build_model,
    count_parameters,
    default_config,
    forward_scores,
    load_pretrained,
    parameter_count,
    save_weights,
    set_frozen,
)
from angernet.nn import Adam, softmax_cross_entropy


@pytest.fixture
def net():
    return build_model(default_config(), np.random.default_rng(0))


class TestParameterCount:
    def test_default_is_215826(self, net):
        assert count_parameters(net) == 215_826
        assert parameter_count(default_config()) == 215_826

    def test_wide_conv4_is_463266(self):
        wide = build_model(default_config(conv4_channels=256), np.random.default_rng(0))
        assert count_parameters(wide) == 463_266
        assert parameter_count(default_config(conv4_channels=256)) == 463_266

    def test_empty_layer_list_counts_zero(self):
        assert parameter_count(ModelConfig(layers=[], class_count=2)) == 0

    def test_single_unnormalized_conv_counts_two(self):
        config = ModelConfig(
            layers=[LayerSpec(1, 1, 1, 0, has_batch_norm=False)], class_count=1
        )
        assert parameter_count(config) == 2
        assert count_parameters(AngerNet(config)) == 2

    def test_count_unchanged_by_freezing(self, net):
        before = count_parameters(net)
        set_frozen(net, 2)
        assert count_parameters(net) == before


class TestInitialization:
    def test_fan_in_uniform_ranges(self, net):
        for block in net.blocks:
            spec = block.spec
            limit = np.sqrt(1.0 / (block.conv.in_channels * spec.kernel))
            assert np.all(np.abs(block.conv.weight.data) <= limit)
            assert np.all(block.conv.bias.data == 0.0)
            if block.bn is not None:
                assert np.all(block.bn.gamma.data == 1.0)
                assert np.all(block.bn.beta.data == 0.0)
                assert np.all(block.bn.running_mean == 0.0)
                assert np.all(block.bn.running_var == 1.0)

    def test_seeded_build_is_reproducible(self):
        a = build_model(default_config(), np.random.default_rng(5))
        b = build_model(default_config(), np.random.default_rng(5))
        for (name_a, ta), (name_b, tb) in zip(a.named_tensors(), b.named_tensors()):
            assert name_a == name_b
            assert np.array_equal(ta, tb)


class TestForward:
    def test_internal_lengths_for_1p2s_clip(self, net):
        assert net.trace_lengths(19200) == [9601, 1200, 601, 75, 38, 20, 19]

    def test_softmax_outputs_normalized(self, net):
        clip = np.random.default_rng(1).normal(size=19200).astype(np.float32)
        p_anger, logits = forward_scores(net, clip)
        assert 0.0 <= p_anger <= 1.0
        assert logits.shape == (2,)

    def test_variable_length_contract(self, net):
        rng = np.random.default_rng(2)
        for length in (net.min_input_length(), 4096, 19200, 24000):
            p_anger, _ = forward_scores(net, rng.normal(size=length).astype(np.float32))
            assert 0.0 <= p_anger <= 1.0

    def test_eval_mode_bitwise_deterministic(self, net):
        clip = np.random.default_rng(3).normal(size=19200).astype(np.float32)
        p1, logits1 = forward_scores(net, clip)
        p2, logits2 = forward_scores(net, clip)
        assert p1 == p2
        assert np.array_equal(logits1, logits2)

    def test_too_short_input_names_collapsing_layer(self, net):
        minimum = net.min_input_length()
        forward_scores(net, np.zeros(minimum, dtype=np.float32))  # boundary passes
        with pytest.raises(InputTooShortError, match=r"layer\d"):
            forward_scores(net, np.zeros(minimum - 1, dtype=np.float32))

    def test_length_algebra_matches_measured_outputs(self, net):
        # compose the per-stage formulas and compare against real forwards
        rng = np.random.default_rng(4)
        minimum = net.min_input_length()
        lengths = rng.integers(minimum, 24000, size=100)
        for length in lengths:
            x = rng.normal(size=(1, 1, int(length))).astype(np.float32)
            out = x
            for block in net.blocks:
                out = block.forward(out, training=False, rng=None)
            assert out.shape[2] == net.trace_lengths(int(length))[-1], length


class TestTransfer:
    def test_load_first_three_replaces_exactly_those(self, net):
        donor = build_model(default_config(), np.random.default_rng(99))
        store = save_weights(donor)
        before = {name: values.copy() for name, values in net.named_tensors()}
        loaded = load_pretrained(net, store, 3)
        assert sorted(loaded) == sorted(
            name for name in before if int(name[5]) <= 3
        )
        for name, values in net.named_tensors():
            if int(name[5]) <= 3:
                assert np.array_equal(values, store[name]), name
            else:
                assert np.array_equal(values, before[name]), name

    def test_load_zero_layers_is_noop(self, net):
        donor = build_model(default_config(), np.random.default_rng(99))
        before = {name: values.copy() for name, values in net.named_tensors()}
        assert load_pretrained(net, save_weights(donor), 0) == []
        for name, values in net.named_tensors():
            assert np.array_equal(values, before[name])

    def test_shape_mismatch_names_offender(self, net):
        donor = build_model(default_config(), np.random.default_rng(99))
        store = save_weights(donor)
        bad = type(store)()
        for name, values in store.items():
            if name == "layer2.conv.weight":
                bad.add(name, values[:, :, :31])
            else:
                bad.add(name, values)
        with pytest.raises(WeightFormatError, match="layer2.conv.weight"):
            load_pretrained(net, bad, 3)

    def test_missing_tensors_listed(self, net):
        donor = build_model(default_config(), np.random.default_rng(99))
        store = save_weights(donor)
        partial = type(store)()
        for name, values in store.items():
            if name != "layer1.bn.gamma":
                partial.add(name, values)
        with pytest.raises(WeightFormatError, match="layer1.bn.gamma"):
            load_pretrained(net, partial, 3)

    def test_transfer_identity_roundtrip(self, net):
        donor = build_model(default_config(), np.random.default_rng(99))
        source = save_weights(donor)
        load_pretrained(net, source, 3)
        emitted = save_weights(net)
        for name in source.names():
            if int(name[5]) <= 3:
                assert emitted[name].tobytes() == source[name].tobytes()


class TestFreezing:
    def _train_steps(self, net, steps=5):
        rng = np.random.default_rng(0)
        optimizer = Adam()
        for _ in range(steps):
            x = rng.normal(size=(4, 1, 2048)).astype(np.float32)
            y = rng.integers(0, 2, size=4)
            logits = net.forward(x, training=True, rng=rng)
            _loss, _p, dlogits = softmax_cross_entropy(logits, y)
            Adam.zero_grad(net.parameters())
            net.backward(dlogits)
            optimizer.step(net.trainable_parameters())

    def test_frozen_prefix_bitwise_unchanged(self, net):
        set_frozen(net, 2)
        frozen_before = {
            name: values.tobytes()
            for name, values in net.named_tensors()
            if int(name[5]) <= 2
        }
        self._train_steps(net)
        for name, values in net.named_tensors():
            if int(name[5]) <= 2:
                assert values.tobytes() == frozen_before[name], name

    def test_unfrozen_layers_change(self, net):
        set_frozen(net, 2)
        before = {
            name: values.copy()
            for name, values in net.named_tensors()
            if name.endswith("conv.weight") and int(name[5]) > 2
        }
        self._train_steps(net)
        for name, values in net.named_tensors():
            if name in before:
                assert not np.array_equal(values, before[name]), name

    def test_freeze_zero_everything_trainable(self, net):
        set_frozen(net, 0)
        assert len(net.trainable_parameters()) == len(net.parameters())

    def test_freeze_out_of_range(self, net):
        with pytest.raises(ConfigError):
            set_frozen(net, 6)

    def test_fully_frozen_network_never_moves(self, net):
        set_frozen(net, 5)
        before = {name: values.tobytes() for name, values in net.named_tensors()}
        self._train_steps(net)
        for name, values in net.named_tensors():
            assert values.tobytes() == before[name]
