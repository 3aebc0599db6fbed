"""
Forward-pass throughput, training step timing and memory footprint.
"""
import time

import numpy as np
import pytest
from click.testing import CliRunner

from attnhar.main import EXIT_OK, cli
from attnhar.models.config_models import ModelSpec, TrainConfig
from attnhar.services.datasets import SequenceDataset
from attnhar.services.gradcheck import run_gradcheck_suite
from attnhar.services.network import build_model
from attnhar.services.training import evaluate, train
from attnhar.utils.timing import Stopwatch, log_duration, memory_usage


def _ucihar_like(rng, count):
    return SequenceDataset(
        windows=rng.standard_normal((count, 6, 128)),
        labels=np.arange(count) % 6,
        class_names=[f"c{k}" for k in range(6)],
        channel_names=[f"a{k}" for k in range(6)],
        sample_rate_hz=50.0,
        name="bench",
    )


class TestTiming:
    """Stopwatch and duration logging."""

    def test_stopwatch_accumulates(self):
        watch = Stopwatch()
        for _ in range(2):
            with watch.section():
                time.sleep(0.01)
        assert watch.seconds >= 0.02
        assert watch.stop() == 0.0

    def test_log_duration_yields_watch(self):
        with log_duration("bench") as watch:
            time.sleep(0.005)
        assert watch.seconds >= 0.005


class TestThroughput:
    """Inference speed of the networks on UCI HAR sized windows."""

    @pytest.mark.parametrize("levels", [0, 3])
    def test_eval_throughput_reported(self, rng, levels):
        """64 windows of 6 x 128 are scored well within a minute."""
        model = build_model(ModelSpec.default_layout(128, 6, 6, attention_levels=levels), seed=0)
        data = _ucihar_like(rng, 64)
        start = time.perf_counter()
        report = evaluate(model, data, batch_size=32)
        elapsed = time.perf_counter() - start
        assert report.num_sequences == 64
        assert report.throughput_seqs_per_s > 0
        assert report.forward_seconds <= elapsed
        assert elapsed < 60

    def test_attention_overhead_is_bounded(self, rng):
        """Net-att3 costs at most a few times the plain CNN per sequence."""
        windows = rng.standard_normal((32, 6, 128))
        timings = {}
        for levels in (0, 3):
            model = build_model(ModelSpec.default_layout(128, 6, 6, attention_levels=levels), seed=0)
            model.predict_logits(windows[:2])
            start = time.perf_counter()
            model.predict_logits(windows, batch_size=32)
            timings[levels] = time.perf_counter() - start
        assert timings[3] < 5 * timings[0] + 0.5

    def test_training_epoch_time(self, rng):
        """One epoch over 48 windows finishes and records its duration."""
        model = build_model(ModelSpec.default_layout(128, 6, 6, attention_levels=2), seed=0)
        result = train(model, _ucihar_like(rng, 48), None, TrainConfig(epochs=1, batch_size=16, seed=0))
        record = result.history.records[0]
        assert 0 < record.seconds < 120
        assert result.seconds >= record.seconds


class TestMemory:
    def test_memory_usage_reported(self):
        usage = memory_usage()
        assert usage.rss_mb > 0

    def test_inference_does_not_grow_memory(self, rng):
        """Repeated graph-free prediction keeps RSS roughly flat."""
        model = build_model(ModelSpec.default_layout(128, 6, 6, attention_levels=3), seed=0)
        windows = rng.standard_normal((16, 6, 128))
        model.predict_logits(windows)
        before = memory_usage().rss_mb
        for _ in range(10):
            model.predict_logits(windows)
        assert memory_usage().rss_mb - before < 200


@pytest.mark.slow
def test_full_gradcheck_suite():
    """Every differentiable operation passes with the default seed count."""
    results = run_gradcheck_suite()
    failing = [(r.op, r.max_rel_error, r.error) for r in results if not r.passed]
    assert not failing


def test_one_epoch_smoke_run_time(tmp_path, uci_root):
    """`train --epochs 1` on a small subset finishes well inside a minute."""
    start = time.perf_counter()
    result = CliRunner().invoke(
        cli,
        ["train", "--dataset", "ucihar", "--data-dir", str(uci_root), "--subset", "32", "--epochs", "1",
         "--variant", "att2", "--out", str(tmp_path / "run")],
    )
    assert result.exit_code == EXIT_OK, result.output
    assert time.perf_counter() - start < 60
