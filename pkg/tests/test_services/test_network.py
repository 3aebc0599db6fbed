"""Tests for the fundamental CNN and its attention variants."""
import numpy as np
import pytest

from attnhar.core.exceptions import ModelSpecMismatchError, ShapeError
from attnhar.models.config_models import CompatMode, LayerKind, LayerSpec, ModelSpec, NormMode
from attnhar.services.network import HARNetwork, build_fundamental_cnn, build_model


class TestFundamentalCNN:
    """Shape arithmetic of C(32)-C(64)-C(128)-P-C(128)-P-C(128)-P-FC(128)."""

    def test_ucihar_tap_lengths(self):
        """128-sample windows give taps of 128, 64 and 32 locations."""
        model = build_fundamental_cnn(128, 6, 6)
        assert model.tap_lengths == [128, 64, 32]
        assert model.tap_strides == [1, 2, 4]
        assert model.global_width == 128

    def test_long_window_tap_lengths(self):
        """2048-sample windows give taps of 2048, 1024 and 512 locations."""
        model = build_fundamental_cnn(2048, 3, 4)
        assert model.tap_lengths == [2048, 1024, 512]

    def test_forward_shapes(self, rng):
        """Six classes give [B, 6] logits; taps are [B, 128, n] and G is [B, 128]."""
        model = build_fundamental_cnn(32, 6, 6, seed=3)
        output = model(rng.standard_normal((5, 6, 32)))
        assert output.logits.shape == (5, 6)
        assert output.global_feature.shape == (5, 128)
        assert [t.shape for t in output.taps] == [(5, 128, 32), (5, 128, 16), (5, 128, 8)]
        assert output.attention is None
        assert output.profiles(0, NormMode.TANH) == []

    def test_input_len_must_divide_by_eight(self):
        """Three stride-2 pools need input_len % 8 == 0."""
        with pytest.raises(ShapeError) as excinfo:
            build_fundamental_cnn(100, 3, 4)
        assert excinfo.value.dimension == "input_len"

    def test_wrong_input_shape(self, rng):
        """Inputs must be [B, C, L] with the model's C and L."""
        model = build_fundamental_cnn(16, 3, 4)
        with pytest.raises(ShapeError):
            model(rng.standard_normal((2, 4, 16)))

    def test_parameter_names(self):
        """Five convolutions, one FC(128) and the classifier."""
        names = set(build_fundamental_cnn(16, 3, 4).parameters())
        expected = {f"conv{k}.{p}" for k in range(1, 6) for p in ("weight", "bias")}
        expected |= {"fc1.weight", "fc1.bias", "classifier.weight", "classifier.bias"}
        assert names == expected

    def test_parameter_count(self):
        """Counted by hand for 16 x 3 inputs and 4 classes."""
        convs = (32 * 3 * 5 + 32) + (64 * 32 * 5 + 64) + 3 * (128 * 128 * 5 + 128) - (128 * 128 * 5 - 128 * 64 * 5)
        dense = (128 * 256 + 128) + (4 * 128 + 4)
        assert build_fundamental_cnn(16, 3, 4).parameter_count() == convs + dense

    def test_same_seed_same_weights(self):
        """Initialization is deterministic under the seed."""
        a = build_fundamental_cnn(16, 3, 4, seed=11).state_dict()
        b = build_fundamental_cnn(16, 3, 4, seed=11).state_dict()
        c = build_fundamental_cnn(16, 3, 4, seed=12).state_dict()
        assert all(np.array_equal(a[k], b[k]) for k in a)
        assert not np.array_equal(a["conv1.weight"], c["conv1.weight"])

    def test_predict_logits_matches_forward(self, rng):
        """Batched graph-free prediction equals a single forward pass."""
        model = build_fundamental_cnn(16, 3, 4, seed=2)
        windows = rng.standard_normal((7, 3, 16))
        np.testing.assert_allclose(model.predict_logits(windows, batch_size=3), model(windows).logits.data, rtol=1e-12)


class TestAttentionVariants:
    """Net-att, Net-att2 and Net-att3 built from a spec."""

    @pytest.mark.parametrize("levels", [1, 2, 3])
    def test_attention_strides_use_last_taps(self, levels):
        """Level strides are the last S tap strides."""
        spec = ModelSpec.default_layout(16, 3, 4, attention_levels=levels)
        model = build_model(spec, seed=0)
        assert model.attention_strides == [1, 2, 4][-levels:]

    def test_forward_exposes_profiles(self, att3_spec, rng):
        """Each sequence has one profile per level, level 1 first."""
        model = build_model(att3_spec, seed=0)
        output = model(rng.standard_normal((2, 3, 16)))
        assert output.logits.shape == (2, 4)
        profiles = output.profiles(1, att3_spec.norm_mode)
        assert [p.n for p in profiles] == [16, 8, 4]
        assert all(p.norm_mode == NormMode.TANH for p in profiles)

    def test_build_model_keeps_base_trunk(self, att3_spec):
        """Attention variants start from the fundamental CNN with the same seed."""
        base = build_fundamental_cnn(16, 3, 4, seed=9).state_dict()
        model = build_model(att3_spec, seed=9).state_dict()
        assert np.array_equal(base["conv3.weight"], model["conv3.weight"])
        assert model["classifier.weight"].shape == (4, 384)

    def test_custom_layout_is_honoured(self):
        """A caller-supplied layer list builds that trunk, not the default one."""
        layers = [
            LayerSpec(kind=LayerKind.CONV1D, channels_out=8, kernel_len=3, padding=1),
            LayerSpec(kind=LayerKind.RELU, tap=True),
            LayerSpec(kind=LayerKind.MAXPOOL1D, kernel_len=2, stride=2),
            LayerSpec(kind=LayerKind.CONV1D, channels_out=8, kernel_len=3, padding=1),
            LayerSpec(kind=LayerKind.RELU, tap=True),
            LayerSpec(kind=LayerKind.MAXPOOL1D, kernel_len=2, stride=2),
            LayerSpec(kind=LayerKind.FLATTEN),
            LayerSpec(kind=LayerKind.DENSE, channels_out=8),
            LayerSpec(kind=LayerKind.RELU),
        ]
        for levels in (0, 2):
            spec = ModelSpec(input_len=12, input_channels=3, layers=layers, attention_levels=levels, num_classes=4)
            model = build_model(spec, seed=0)
            assert model.spec.layers == layers
            assert model.state_dict()["conv1.weight"].shape == (8, 3, 3)
            assert model.state_dict()["fc1.weight"].shape == (8, 24)
            assert model.tap_strides == [1, 2]
            assert model.classifier_input_width == 8 * max(levels, 1)

    def test_pooling_remainder_rejected(self):
        with pytest.raises(ShapeError) as excinfo:
            build_model(ModelSpec.default_layout(100, 3, 4, attention_levels=1))
        assert excinfo.value.dimension == "L"

    def test_dot_variant_has_no_u(self):
        """Only pc compatibility adds attention parameters."""
        spec = ModelSpec.default_layout(16, 3, 4, attention_levels=2, compat_mode=CompatMode.DOT)
        assert not any(name.startswith("attention.") for name in build_model(spec).parameters())


class TestStateDict:
    """Copying parameters in and out."""

    def test_round_trip(self, att3_spec, rng):
        """Loading a state reproduces the logits bit for bit."""
        source = build_model(att3_spec, seed=1)
        target = build_model(att3_spec, seed=2)
        target.load_state_dict(source.state_dict())
        x = rng.standard_normal((3, 3, 16))
        np.testing.assert_array_equal(target(x).logits.data, source(x).logits.data)

    def test_missing_parameter(self, small_spec):
        """Strict loading needs every parameter."""
        model = HARNetwork(small_spec)
        state = model.state_dict()
        del state["fc1.bias"]
        with pytest.raises(ModelSpecMismatchError):
            model.load_state_dict(state)

    def test_wrong_shape(self, small_spec):
        """Shapes must match exactly."""
        model = HARNetwork(small_spec)
        state = model.state_dict()
        state["classifier.bias"] = np.zeros(5)
        with pytest.raises(ModelSpecMismatchError):
            model.load_state_dict(state)

    def test_state_dict_is_a_copy(self, small_spec):
        """Mutating the returned arrays leaves the model alone."""
        model = HARNetwork(small_spec)
        state = model.state_dict()
        state["conv1.bias"][...] = 5.0
        assert (model.parameters()["conv1.bias"].data == 0).all()
