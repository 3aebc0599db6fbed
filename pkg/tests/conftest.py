import os

import numpy as np
import pytest

# Set testing environment before the package reads its settings
os.environ["ENVIRONMENT"] = "testing"
os.environ["SHOW_PROGRESS"] = "false"
os.environ.setdefault("LOG_LEVEL", "WARNING")

from attnhar.models.config_models import CompatMode, ModelSpec, NormMode, SynthConfig  # noqa: E402
from attnhar.services.datasets import UCI_SIGNALS, UCI_WINDOW_LEN, save_synthetic, synth_weak  # noqa: E402

UCI_EXTRA_SIGNALS = ["total_acc_x", "total_acc_y", "total_acc_z"]


def write_uci_split(root, split, windows, labels):
    """Write one UCI HAR split in the original whitespace-separated layout."""
    signal_dir = root / split / "Inertial Signals"
    signal_dir.mkdir(parents=True, exist_ok=True)
    for channel, signal in enumerate(UCI_SIGNALS):
        lines = ["  " + " ".join(f"{v: .7e}" for v in row) for row in windows[:, channel, :]]
        (signal_dir / f"{signal}_{split}.txt").write_text("\n".join(lines) + "\n", encoding="ascii")
    for signal in UCI_EXTRA_SIGNALS:
        lines = ["  " + " ".join(["1.0000000e+000"] * UCI_WINDOW_LEN) for _ in range(len(labels))]
        (signal_dir / f"{signal}_{split}.txt").write_text("\n".join(lines) + "\n", encoding="ascii")
    (root / split / f"y_{split}.txt").write_text("".join(f"{label}\n" for label in labels), encoding="ascii")


def uci_values(rng, count):
    """Random windows rounded to the 8 significant digits the text files keep."""
    values = rng.standard_normal((count, len(UCI_SIGNALS), UCI_WINDOW_LEN)) * 0.3
    return np.vectorize(lambda v: float(f"{v:.7e}"))(values)


@pytest.fixture
def rng():
    """Seeded generator for test data."""
    return np.random.default_rng(1234)


@pytest.fixture
def uci_root(tmp_path):
    """Tiny UCI HAR tree: 6 train windows, 4 test windows, labels 1..6."""
    rng = np.random.default_rng(99)
    root = tmp_path / "UCI HAR Dataset"
    train = uci_values(rng, 6)
    test = uci_values(rng, 4)
    write_uci_split(root, "train", train, [1, 2, 3, 4, 5, 6])
    write_uci_split(root, "test", test, [6, 1, 3, 2])
    return root


@pytest.fixture
def uci_arrays(uci_root):
    """The arrays written into uci_root, regenerated from the same seed."""
    rng = np.random.default_rng(99)
    return {"train": uci_values(rng, 6), "test": uci_values(rng, 4)}


@pytest.fixture
def small_synth_config():
    """Short weakly labeled sequences that keep tests fast."""
    return SynthConfig(num_sequences=40, seq_len=64, segment_len_min=8, segment_len_max=24)


@pytest.fixture
def synthetic_dir(tmp_path, small_synth_config):
    """Directory holding weak.bin and weak.json for the small config, seed 5."""
    out_dir = tmp_path / "weak"
    save_synthetic(synth_weak(small_synth_config, seed=5), out_dir, 5, small_synth_config)
    return out_dir


@pytest.fixture
def small_spec():
    """Default layout on 16-sample, 3-channel windows with 4 classes."""
    return ModelSpec.default_layout(input_len=16, input_channels=3, num_classes=4)


@pytest.fixture
def att3_spec():
    """Three-level pc/tanh attention on the small layout."""
    return ModelSpec.default_layout(
        input_len=16,
        input_channels=3,
        num_classes=4,
        attention_levels=3,
        compat_mode=CompatMode.PC,
        norm_mode=NormMode.TANH,
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-size gradient checks and long training runs")
