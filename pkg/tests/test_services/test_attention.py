"""Tests for compatibility scoring, normalization and attention pooling."""
import math

import numpy as np
import pytest

from attnhar.core.exceptions import ModelSpecMismatchError, NonFiniteError, ShapeError
from attnhar.models.config_models import CompatMode, NormMode
from attnhar.services import attention
from attnhar.services.network import build_fundamental_cnn
from attnhar.services.tensor import Tensor, parameter


def _local(*columns):
    """[1, C, n] feature map from column vectors l_1..l_n."""
    return Tensor(np.array(columns, dtype=float).T[None, :, :])


class TestCompatDot:
    """c_i = <l_i, G>."""

    def test_identity(self):
        """l_i = G = e_1 scores 1 everywhere."""
        g = np.array([1.0, 0.0, 0.0])
        scores = attention.compat_dot(_local(g, g, g), Tensor(g[None, :]))
        np.testing.assert_array_equal(scores.data, [[1.0, 1.0, 1.0]])

    def test_orthogonal(self):
        """Local features orthogonal to G score 0."""
        scores = attention.compat_dot(_local([0.0, 2.0], [0.0, -1.0]), Tensor([[3.0, 0.0]]))
        np.testing.assert_array_equal(scores.data, [[0.0, 0.0]])

    def test_hand_oracle(self):
        """l_1=[1,2], l_2=[0,1], G=[1,1] -> [3,1]."""
        scores = attention.compat_dot(_local([1.0, 2.0], [0.0, 1.0]), Tensor([[1.0, 1.0]]))
        np.testing.assert_array_equal(scores.data, [[3.0, 1.0]])

    def test_width_mismatch(self):
        """Local channels must equal |G|."""
        with pytest.raises(ShapeError) as excinfo:
            attention.compat_dot(Tensor(np.ones((1, 3, 4))), Tensor(np.ones((1, 2))))
        assert excinfo.value.dimension == "C"


class TestCompatPc:
    """c_i = <u, l_i + G>."""

    def test_zero_u(self, rng):
        """u = 0 scores 0."""
        scores = attention.compat_pc(
            Tensor(rng.standard_normal((2, 4, 5))), Tensor(rng.standard_normal((2, 4))), Tensor(np.zeros(4))
        )
        np.testing.assert_array_equal(scores.data, np.zeros((2, 5)))

    def test_zero_local_is_constant(self, rng):
        """L = 0 scores <u, G> at every location."""
        g = rng.standard_normal((1, 4))
        u = rng.standard_normal(4)
        scores = attention.compat_pc(Tensor(np.zeros((1, 4, 6))), Tensor(g), Tensor(u))
        np.testing.assert_allclose(scores.data, np.full((1, 6), g[0] @ u), rtol=1e-12)

    def test_hand_oracle(self):
        """u=[1,-1], G=[1,1], l_1=[0,0], l_2=[2,0] -> [0,2]."""
        scores = attention.compat_pc(_local([0.0, 0.0], [2.0, 0.0]), Tensor([[1.0, 1.0]]), Tensor([1.0, -1.0]))
        np.testing.assert_array_equal(scores.data, [[0.0, 2.0]])

    def test_u_receives_gradient(self):
        """u is a learned parameter."""
        u = parameter([1.0, -1.0], "u")
        attention.compat_pc(_local([0.0, 0.0], [2.0, 0.0]), Tensor([[1.0, 1.0]]), u).sum().backward()
        # sum_i (l_i + G) = [0,0] + [2,0] + 2 * [1,1]
        np.testing.assert_array_equal(u.grad, [4.0, 2.0])

    def test_u_length_mismatch(self):
        """u must match the channel width."""
        with pytest.raises(ShapeError):
            attention.compat_pc(Tensor(np.ones((1, 3, 2))), Tensor(np.ones((1, 3))), Tensor(np.ones(2)))


class TestNormalizeSoftmax:
    """Softmax over locations."""

    def test_uniform(self):
        """Equal scores give equal weights."""
        np.testing.assert_allclose(attention.normalize_softmax(Tensor([[0.0] * 4])).data, [[0.25] * 4], rtol=1e-15)

    def test_shift_invariance(self):
        """[1,2] and [101,102] normalize identically."""
        a = attention.normalize_softmax(Tensor([[1.0, 2.0]])).data
        b = attention.normalize_softmax(Tensor([[101.0, 102.0]])).data
        np.testing.assert_array_equal(a, b)

    def test_closed_form(self):
        """[0, ln 3] -> [0.25, 0.75]."""
        out = attention.normalize_softmax(Tensor([[0.0, math.log(3)]])).data
        np.testing.assert_allclose(out, [[0.25, 0.75]], rtol=1e-12)

    def test_non_finite_scores(self):
        """NaN scores are rejected."""
        with pytest.raises(NonFiniteError):
            attention.normalize_softmax(Tensor([[0.0, float("nan")]]))

    def test_properties_over_many_instances(self, rng):
        """Nonnegative, unit sum and shift invariant on 10^4 random rows per width."""
        for n in (1, 2, 7, 32):
            scores = rng.standard_normal((10_000, n)) * 5
            weights = attention.normalize_softmax(Tensor(scores)).data
            assert (weights >= 0).all()
            np.testing.assert_allclose(weights.sum(axis=1), 1.0, atol=1e-9)
            shifted = attention.normalize_softmax(Tensor(scores + rng.uniform(-50, 50, size=(10_000, 1)))).data
            np.testing.assert_allclose(shifted, weights, rtol=1e-9, atol=1e-12)


class TestNormalizeTanh:
    """Pointwise tanh."""

    def test_examples(self):
        """0 -> 0, +-20 -> +-1, 0.5 -> 0.46211716."""
        out = attention.normalize_tanh(Tensor([[0.0, 20.0, -20.0, 0.5]])).data[0]
        assert out[0] == 0.0
        assert abs(out[1] - 1.0) < 1e-9
        assert abs(out[2] + 1.0) < 1e-9
        assert abs(out[3] - 0.46211716) < 1e-8

    def test_properties_over_many_instances(self, rng):
        """Strictly inside (-1, 1), sign preserving, no coupling across locations."""
        scores = rng.standard_normal((10_000, 8)) * 3
        weights = attention.normalize_tanh(Tensor(scores)).data
        assert (np.abs(weights) < 1).all()
        assert (np.sign(weights) == np.sign(scores)).all()
        changed = scores.copy()
        changed[:, 0] += 1.0
        np.testing.assert_array_equal(attention.normalize_tanh(Tensor(changed)).data[:, 1:], weights[:, 1:])

    def test_large_scores_stay_inside_open_interval(self, rng):
        """|c| >= 20 rounds tanh to 1.0 in float64; the weights stay strictly inside."""
        out = attention.normalize_tanh(Tensor([[19.0, 25.0, -30.0, 1e6]])).data[0]
        assert (np.abs(out) < 1).all()
        np.testing.assert_allclose(out, [1.0, 1.0, -1.0, 1.0], atol=1e-9)
        scores = rng.uniform(20, 500, size=(1000, 8)) * rng.choice([-1.0, 1.0], size=(1000, 8))
        weights = attention.normalize_tanh(Tensor(scores)).data
        assert (np.abs(weights) < 1).all()
        assert (np.sign(weights) == np.sign(scores)).all()

    def test_saturated_gradient_is_tiny(self):
        scores = parameter(np.array([[0.0, 40.0]]), "scores")
        attention.normalize_tanh(scores).sum().backward()
        assert scores.grad[0, 0] == 1.0
        assert 0.0 < scores.grad[0, 1] < 1e-15

    def test_non_finite_scores(self):
        with pytest.raises(NonFiniteError):
            attention.normalize_tanh(Tensor([[np.nan, 0.0]]))


class TestAttendPool:
    """g = sum_i a_i l_i."""

    def test_one_hot_selects_column(self, rng):
        """One-hot weights at k return l_k."""
        local = rng.standard_normal((1, 5, 4))
        weights = np.zeros((1, 4))
        weights[0, 2] = 1.0
        g = attention.attend_pool(Tensor(local), Tensor(weights)).data
        np.testing.assert_array_equal(g, local[:, :, 2])

    def test_uniform_weights_average(self, rng):
        """Weights 1/n give the mean of the columns."""
        local = rng.standard_normal((2, 3, 5))
        g = attention.attend_pool(Tensor(local), Tensor(np.full((2, 5), 0.2))).data
        np.testing.assert_allclose(g, local.mean(axis=2), rtol=1e-12)

    def test_hand_oracle(self):
        """weights [0.25, 0.75], l_1=[4,0], l_2=[0,4] -> [1,3]."""
        g = attention.attend_pool(_local([4.0, 0.0], [0.0, 4.0]), Tensor([[0.25, 0.75]])).data
        np.testing.assert_array_equal(g, [[1.0, 3.0]])

    def test_matches_brute_force(self, rng):
        """Integer inputs make the explicit loop exact."""
        local = rng.integers(-4, 5, size=(3, 6, 7)).astype(float)
        weights = rng.integers(-3, 4, size=(3, 7)).astype(float)
        expected = np.zeros((3, 6))
        for b in range(3):
            for i in range(7):
                expected[b] += weights[b, i] * local[b, :, i]
        np.testing.assert_array_equal(attention.attend_pool(Tensor(local), Tensor(weights)).data, expected)

    def test_convex_combination_bounds(self, rng):
        """Softmax-pooled features stay within the per-channel range of the columns."""
        local = rng.standard_normal((500, 4, 9))
        weights = attention.normalize_softmax(Tensor(rng.standard_normal((500, 9)) * 3)).data
        g = attention.attend_pool(Tensor(local), Tensor(weights)).data
        assert (g <= local.max(axis=2) + 1e-12).all()
        assert (g >= local.min(axis=2) - 1e-12).all()

    def test_permutation_equivariance(self, rng):
        """Permuting locations together with weights leaves g unchanged."""
        local = rng.standard_normal((2, 4, 6))
        g_vec = rng.standard_normal((2, 4))
        perm = rng.permutation(6)
        for norm in (attention.normalize_softmax, attention.normalize_tanh):
            weights = norm(attention.compat_dot(Tensor(local), Tensor(g_vec))).data
            permuted = norm(attention.compat_dot(Tensor(local[:, :, perm]), Tensor(g_vec))).data
            np.testing.assert_allclose(permuted, weights[:, perm], rtol=1e-12)
            g = attention.attend_pool(Tensor(local), Tensor(weights)).data
            g_perm = attention.attend_pool(Tensor(local[:, :, perm]), Tensor(permuted)).data
            np.testing.assert_allclose(g_perm, g, rtol=1e-10, atol=1e-12)

    def test_location_count_mismatch(self):
        """Weights must cover every location."""
        with pytest.raises(ShapeError) as excinfo:
            attention.attend_pool(Tensor(np.ones((1, 2, 3))), Tensor(np.ones((1, 4))))
        assert excinfo.value.dimension == "n"


class TestAttentionHead:
    """Per-level scoring and concatenation."""

    def test_pc_u_starts_at_zero(self):
        """Initial pc scores are zero, one u per level."""
        head = attention.AttentionHead(2, CompatMode.PC, NormMode.TANH, width=5)
        assert sorted(head.parameters()) == ["attention.u1", "attention.u2"]
        assert all((u.data == 0).all() for u in head.u)

    def test_dot_has_no_parameters(self):
        """Dot compatibility learns nothing of its own."""
        assert attention.AttentionHead(3, CompatMode.DOT, NormMode.SOFTMAX, width=5).parameters() == {}

    def test_concatenates_levels(self, rng):
        """g = [g^1 g^2] has width S * C and keeps per-level profiles."""
        head = attention.AttentionHead(2, CompatMode.DOT, NormMode.SOFTMAX, width=3)
        taps = [Tensor(rng.standard_normal((2, 3, 8))), Tensor(rng.standard_normal((2, 3, 4)))]
        descriptor = head(taps, Tensor(rng.standard_normal((2, 3))))
        assert descriptor.concatenated.shape == (2, 6)
        np.testing.assert_array_equal(descriptor.concatenated.data[:, 3:], descriptor.per_level[1].pooled.data)
        profiles = descriptor.profiles(1, NormMode.SOFTMAX)
        assert [p.level for p in profiles] == [1, 2]
        assert [p.n for p in profiles] == [8, 4]
        assert profiles[0].rows()[0][:2] == (1, 0)

    def test_wrong_tap_count(self, rng):
        """The head needs exactly S taps."""
        head = attention.AttentionHead(2, CompatMode.DOT, NormMode.TANH, width=3)
        with pytest.raises(ShapeError):
            head([Tensor(rng.standard_normal((1, 3, 4)))], Tensor(rng.standard_normal((1, 3))))


class TestAssembleAttentionModel:
    """Converting the fundamental CNN into Net-att variants."""

    @pytest.mark.parametrize("levels, width", [(1, 128), (2, 256), (3, 384)])
    def test_classifier_input_width(self, levels, width):
        """The classifier reads 128 * S features."""
        base = build_fundamental_cnn(16, 3, 4, seed=1)
        model = attention.assemble_attention_model(base, levels, CompatMode.PC, NormMode.TANH)
        assert model.classifier_input_width == width
        assert model.parameters()["classifier.weight"].shape == (4, width)

    def test_trunk_weights_are_carried_over(self):
        """Convolutions and FC(128) keep the base weights."""
        base = build_fundamental_cnn(16, 3, 4, seed=1)
        model = attention.assemble_attention_model(base, 2, CompatMode.DOT, NormMode.SOFTMAX)
        base_state, state = base.state_dict(), model.state_dict()
        for name in ("conv1.weight", "conv5.bias", "fc1.weight"):
            np.testing.assert_array_equal(state[name], base_state[name])

    def test_global_feature_not_classified(self, rng):
        """With u = 0 and tanh, g = 0 so logits equal the classifier bias whatever G is."""
        base = build_fundamental_cnn(16, 3, 4, seed=1)
        model = attention.assemble_attention_model(base, 1, CompatMode.PC, NormMode.TANH)
        model.parameters()["classifier.bias"].data[...] = [1.0, 2.0, 3.0, 4.0]
        logits = model(rng.standard_normal((2, 3, 16))).logits.data
        np.testing.assert_array_equal(logits, [[1.0, 2.0, 3.0, 4.0]] * 2)

    def test_too_many_levels(self):
        """S beyond the three taps is rejected."""
        base = build_fundamental_cnn(16, 3, 4)
        with pytest.raises((ShapeError, ModelSpecMismatchError)):
            attention.assemble_attention_model(base, 4, CompatMode.PC, NormMode.TANH)
