"""Tests for Adam, the training loop and evaluation metrics."""
import numpy as np
import pytest

from attnhar.core.exceptions import DatasetError, ModelSpecMismatchError, NonFiniteLossError, ShapeError
from attnhar.models.config_models import TrainConfig
from attnhar.services.datasets import SequenceDataset
from attnhar.services.network import build_fundamental_cnn, build_model
from attnhar.services.training import AdamState, adam_step, evaluate, train


def _dataset(windows, labels, num_classes=4):
    return SequenceDataset(
        windows=windows,
        labels=labels,
        class_names=[f"class{k}" for k in range(num_classes)],
        channel_names=[f"axis{k}" for k in range(windows.shape[1])],
        sample_rate_hz=50.0,
        name="toy",
    )


@pytest.fixture
def toy_data(rng):
    """24 random 3 x 16 windows over 4 classes."""
    return _dataset(rng.standard_normal((24, 3, 16)), np.arange(24) % 4)


class TestAdamStep:
    """Bias-corrected Adam updates."""

    def test_first_step_closed_form(self):
        """theta=1, g=1, lr=0.001 -> 0.999 (m_hat = v_hat = 1)."""
        config = TrainConfig(learning_rate=0.001)
        params, state = adam_step({"theta": np.array([1.0])}, {"theta": np.array([1.0])}, AdamState(), config)
        assert params["theta"][0] == pytest.approx(0.999, abs=1e-10)
        assert state.step == 1
        np.testing.assert_allclose(state.m["theta"], [0.1])
        np.testing.assert_allclose(state.v["theta"], [0.001])

    def test_zero_gradient_leaves_parameters(self, rng):
        """A fresh state and zero gradient change nothing."""
        value = rng.standard_normal((3, 2))
        params, _ = adam_step({"w": value}, {"w": np.zeros((3, 2))}, AdamState(), TrainConfig())
        np.testing.assert_array_equal(params["w"], value)

    def test_inputs_not_mutated(self):
        """The step returns new arrays and a new state."""
        value = np.array([1.0, 2.0])
        state = AdamState()
        adam_step({"w": value}, {"w": np.array([0.5, 0.5])}, state, TrainConfig())
        np.testing.assert_array_equal(value, [1.0, 2.0])
        assert state.step == 0 and state.m == {}

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            adam_step({"w": np.zeros(3)}, {"w": np.zeros(2)}, AdamState(), TrainConfig())

    def test_missing_gradient(self):
        with pytest.raises(ShapeError):
            adam_step({"w": np.zeros(3), "b": np.zeros(1)}, {"w": np.zeros(3)}, AdamState(), TrainConfig())

    def test_identical_runs_identical_trajectories(self, rng):
        grads = [rng.standard_normal(4) for _ in range(5)]

        def run():
            params, state = {"w": np.ones(4)}, AdamState()
            for g in grads:
                params, state = adam_step(params, {"w": g}, state, TrainConfig())
            return params["w"]

        np.testing.assert_array_equal(run(), run())


class TestTrain:
    """Mini-batch training."""

    def test_history_and_selection_without_val(self, toy_data):
        """Without validation the final weights are selected."""
        model = build_fundamental_cnn(16, 3, 4, seed=0)
        result = train(model, toy_data, None, TrainConfig(epochs=2, batch_size=10, seed=1))
        assert result.epochs_completed == 2
        assert [r.epoch for r in result.history.records] == [1, 2]
        assert all(r.val_acc is None for r in result.history.records)
        assert result.best_state is None
        assert result.selected_epoch == 2
        assert result.optimizer_state.step == 2 * 3  # 24 windows in batches of 10, last one partial

    def test_best_validation_epoch_kept(self, toy_data):
        """With validation the best epoch's weights are returned separately."""
        model = build_fundamental_cnn(16, 3, 4, seed=0)
        result = train(model, toy_data, toy_data.select(range(8)), TrainConfig(epochs=3, batch_size=8, seed=1))
        assert result.best_epoch == result.history.best_epoch()
        assert set(result.best_state) == set(result.final_state)
        val = [r.val_acc for r in result.history.records]
        assert val[result.best_epoch - 1] == max(val)

    def test_deterministic(self, toy_data, att3_spec):
        """Same seed, same history and weights bit for bit."""

        def run():
            model = build_model(att3_spec, seed=4)
            return train(model, toy_data, None, TrainConfig(epochs=2, batch_size=7, seed=3))

        a, b = run(), run()
        assert a.history.deterministic_view() == b.history.deterministic_view()
        for name in a.final_state:
            np.testing.assert_array_equal(a.final_state[name], b.final_state[name])

    def test_memorizes_small_set(self, rng):
        """32 random sequences are fitted perfectly."""
        data = _dataset(rng.standard_normal((32, 3, 16)), rng.integers(0, 4, size=32))
        model = build_fundamental_cnn(16, 3, 4, seed=0)
        result = train(model, data, None, TrainConfig(epochs=200, batch_size=8, learning_rate=0.003, seed=0))
        assert result.history.records[-1].train_acc == 1.0
        assert result.history.records[-1].loss < 0.01
        assert evaluate(model, data).accuracy == 1.0
        losses = result.history.losses
        assert np.mean(losses[-10:]) < np.mean(losses[:10])

    def test_loss_windows_never_increase(self, rng):
        """Full-batch training on the memorization set: every 10-epoch mean loss
        is at most the previous one."""
        data = _dataset(rng.standard_normal((32, 3, 16)), rng.integers(0, 4, size=32))
        model = build_fundamental_cnn(16, 3, 4, seed=0)
        result = train(model, data, None, TrainConfig(epochs=50, batch_size=32, learning_rate=0.0005, seed=0))
        losses = result.history.losses
        windows = [np.mean(losses[k:k + 10]) for k in range(0, len(losses), 10)]
        assert len(windows) == 5
        assert all(later <= earlier for earlier, later in zip(windows, windows[1:])), windows

    def test_shape_mismatch(self, rng):
        data = _dataset(rng.standard_normal((4, 2, 16)), np.zeros(4, dtype=int))
        with pytest.raises(ModelSpecMismatchError):
            train(build_fundamental_cnn(16, 3, 4), data, None, TrainConfig(epochs=1))

    def test_non_finite_loss_aborts(self, toy_data):
        """NaN inputs stop training with the epoch and batch."""
        windows = toy_data.windows.copy()
        windows[:] = np.nan
        data = _dataset(windows, toy_data.labels)
        with pytest.raises(NonFiniteLossError) as excinfo:
            train(build_fundamental_cnn(16, 3, 4), data, None, TrainConfig(epochs=1, batch_size=8))
        assert excinfo.value.epoch == 1
        assert excinfo.value.batch == 0

    def test_empty_training_set(self):
        data = _dataset(np.zeros((0, 3, 16)), np.zeros(0, dtype=int))
        with pytest.raises(DatasetError):
            train(build_fundamental_cnn(16, 3, 4), data, None, TrainConfig(epochs=1))


class TestEvaluate:
    """Accuracy, confusion matrix and throughput."""

    def test_labels_from_predictions(self, toy_data):
        """Labelling each window with the model's own argmax gives accuracy 1."""
        model = build_fundamental_cnn(16, 3, 4, seed=5)
        predictions = model.predict_logits(toy_data.windows).argmax(axis=1)
        report = evaluate(model, _dataset(toy_data.windows, predictions))
        assert report.accuracy == 1.0
        assert report.throughput_seqs_per_s > 0

    def test_constant_output_scores_majority_fraction(self, rng):
        """A model that always predicts class 2 scores the share of class 2."""
        model = build_fundamental_cnn(16, 3, 4, seed=5)
        model.parameters()["classifier.weight"].data[...] = 0.0
        model.parameters()["classifier.bias"].data[...] = [0.0, 0.0, 5.0, 0.0]
        labels = np.array([2, 2, 2, 2, 2, 0, 1, 3, 3, 0])
        report = evaluate(model, _dataset(rng.standard_normal((10, 3, 16)), labels))
        assert report.accuracy == pytest.approx(0.5)
        assert report.per_class_accuracy == {"class0": 0.0, "class1": 0.0, "class2": 1.0, "class3": 0.0}

    def test_confusion_rows_are_class_counts(self, toy_data):
        report = evaluate(build_fundamental_cnn(16, 3, 4, seed=5), toy_data, batch_size=5)
        rows = [sum(row) for row in report.confusion_matrix]
        assert rows == [6, 6, 6, 6]
        assert report.num_sequences == 24

    def test_absent_class_is_null(self, rng):
        labels = np.array([0, 1, 1, 0])
        report = evaluate(build_fundamental_cnn(16, 3, 4), _dataset(rng.standard_normal((4, 3, 16)), labels))
        assert report.per_class_accuracy["class3"] is None

    def test_empty_dataset(self):
        data = _dataset(np.zeros((0, 3, 16)), np.zeros(0, dtype=int))
        with pytest.raises(DatasetError):
            evaluate(build_fundamental_cnn(16, 3, 4), data)
