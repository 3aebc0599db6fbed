"""
Sensor-window datasets: the UCI HAR inertial-signal loader, the synthetic
weakly labeled generator, standardization and seeded splits.
"""
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..core.exceptions import DatasetError, DatasetFormatError
from ..core.logging import get_logger
from ..models.config_models import WEAK_CLASS_NAMES, SynthConfig
from ..utils.validators import validate_fractions

logger = get_logger(__name__)

Segment = Tuple[int, int]

UCI_WINDOW_LEN = 128
UCI_SAMPLE_RATE_HZ = 50.0
UCI_SIGNALS = ["body_acc_x", "body_acc_y", "body_acc_z", "body_gyro_x", "body_gyro_y", "body_gyro_z"]
UCI_CLASS_NAMES = ["WALKING", "WALKING_UPSTAIRS", "WALKING_DOWNSTAIRS", "SITTING", "STANDING", "LAYING"]

SYNTH_CHANNEL_NAMES = ["acc_x", "acc_y", "acc_z"]
SYNTH_DATA_FILE = "weak.bin"
SYNTH_SIDECAR_FILE = "weak.json"
STD_FLOOR = 1e-8


@dataclass
class SequenceDataset:
    """Fixed-length multi-channel windows with integer labels.

    ``segments`` holds, per window, the ground-truth foreground intervals
    [start, end) when they are known.
    """

    windows: np.ndarray
    labels: np.ndarray
    class_names: List[str]
    channel_names: List[str]
    sample_rate_hz: float
    segments: Optional[List[List[Segment]]] = None
    name: str = "dataset"

    def __post_init__(self):
        self.windows = np.asarray(self.windows, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.windows.ndim != 3:
            raise DatasetError(f"windows must be [N, C, L], got shape {self.windows.shape}")
        if self.labels.shape != (self.windows.shape[0],):
            raise DatasetError(f"{self.labels.shape[0]} labels for {self.windows.shape[0]} windows")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise DatasetError(f"labels must lie in [0, {len(self.class_names)})")
        if len(self.channel_names) != self.windows.shape[1]:
            raise DatasetError(f"{len(self.channel_names)} channel names for {self.windows.shape[1]} channels")
        if self.segments is not None:
            if len(self.segments) != len(self):
                raise DatasetError(f"{len(self.segments)} segment lists for {len(self)} windows")
            for window_segments in self.segments:
                for start, end in window_segments:
                    if not 0 <= start < end <= self.seq_len:
                        raise DatasetError(f"segment [{start}, {end}) outside [0, {self.seq_len})")

    def __len__(self) -> int:
        return int(self.windows.shape[0])

    @property
    def num_channels(self) -> int:
        return int(self.windows.shape[1])

    @property
    def seq_len(self) -> int:
        return int(self.windows.shape[2])

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def has_segments(self) -> bool:
        return self.segments is not None

    def select(self, indices: Sequence[int], name: Optional[str] = None) -> "SequenceDataset":
        """Windows at ``indices``, in that order."""
        indices = np.asarray(indices, dtype=np.int64)
        if indices.size and (indices.min() < 0 or indices.max() >= len(self)):
            raise DatasetError(f"indices must lie in [0, {len(self)})")
        return SequenceDataset(
            windows=self.windows[indices],
            labels=self.labels[indices],
            class_names=list(self.class_names),
            channel_names=list(self.channel_names),
            sample_rate_hz=self.sample_rate_hz,
            segments=[list(self.segments[i]) for i in indices] if self.segments is not None else None,
            name=name or self.name,
        )

    def head(self, count: int) -> "SequenceDataset":
        return self.select(range(min(count, len(self))))

    def class_counts(self) -> Dict[str, int]:
        counts = np.bincount(self.labels, minlength=self.num_classes)
        return {name: int(c) for name, c in zip(self.class_names, counts)}


@dataclass
class ChannelStats:
    """Per-channel mean and standard deviation of a training split."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise DatasetError("channel mean and std must be vectors of equal length")
        if (self.std < 0).any():
            raise DatasetError("channel std must be non-negative")

    @property
    def scale(self) -> np.ndarray:
        return np.maximum(self.std, STD_FLOOR)

    def to_dict(self) -> Dict[str, List[float]]:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}


def compute_channel_stats(dataset: SequenceDataset) -> ChannelStats:
    return ChannelStats(mean=dataset.windows.mean(axis=(0, 2)), std=dataset.windows.std(axis=(0, 2)))


def _with_windows(dataset: SequenceDataset, windows: np.ndarray) -> SequenceDataset:
    return SequenceDataset(
        windows=windows,
        labels=dataset.labels,
        class_names=dataset.class_names,
        channel_names=dataset.channel_names,
        sample_rate_hz=dataset.sample_rate_hz,
        segments=dataset.segments,
        name=dataset.name,
    )


def standardize(dataset: SequenceDataset, stats: ChannelStats) -> SequenceDataset:
    """Per-channel z-score with the training statistics."""
    if stats.mean.shape[0] != dataset.num_channels:
        raise DatasetError(
            f"channel statistics cover {stats.mean.shape[0]} channels, dataset has {dataset.num_channels}"
        )
    z = (dataset.windows - stats.mean[None, :, None]) / stats.scale[None, :, None]
    return _with_windows(dataset, z)


def destandardize(dataset: SequenceDataset, stats: ChannelStats) -> SequenceDataset:
    if stats.mean.shape[0] != dataset.num_channels:
        raise DatasetError(
            f"channel statistics cover {stats.mean.shape[0]} channels, dataset has {dataset.num_channels}"
        )
    return _with_windows(dataset, dataset.windows * stats.scale[None, :, None] + stats.mean[None, :, None])


# ------------------------------------------------------------------ UCI HAR
def _read_signal_file(path: Path) -> np.ndarray:
    if not path.is_file():
        raise DatasetFormatError("file not found", str(path))
    rows = []
    with path.open("r", encoding="ascii") as handle:
        for line_number, line in enumerate(handle, start=1):
            tokens = line.split()
            if not tokens:
                continue
            if len(tokens) != UCI_WINDOW_LEN:
                raise DatasetFormatError(
                    f"expected {UCI_WINDOW_LEN} values, found {len(tokens)}", str(path), line_number
                )
            try:
                rows.append([float(token) for token in tokens])
            except ValueError as e:
                raise DatasetFormatError(f"unparsable value: {e}", str(path), line_number)
    return np.array(rows, dtype=np.float64).reshape(len(rows), UCI_WINDOW_LEN)


def _read_label_file(path: Path) -> np.ndarray:
    if not path.is_file():
        raise DatasetFormatError("file not found", str(path))
    labels = []
    with path.open("r", encoding="ascii") as handle:
        for line_number, line in enumerate(handle, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                value = int(text)
            except ValueError:
                raise DatasetFormatError(f"label {text!r} is not an integer", str(path), line_number)
            if not 1 <= value <= len(UCI_CLASS_NAMES):
                raise DatasetFormatError(f"label {value} outside 1..{len(UCI_CLASS_NAMES)}", str(path), line_number)
            labels.append(value - 1)
    return np.array(labels, dtype=np.int64)


def load_ucihar(root_dir: Union[str, Path], split: str) -> SequenceDataset:
    """[N, 6, 128] body acceleration and gyroscope windows of one UCI HAR split."""
    if split not in ("train", "test"):
        raise DatasetError(f"UCI HAR has train and test splits only, got {split!r}")
    split_dir = Path(root_dir) / split
    signal_dir = split_dir / "Inertial Signals"
    if not signal_dir.is_dir():
        raise DatasetError(f"missing directory {signal_dir}")

    channels = [_read_signal_file(signal_dir / f"{signal}_{split}.txt") for signal in UCI_SIGNALS]
    label_path = split_dir / f"y_{split}.txt"
    labels = _read_label_file(label_path)
    for signal, values in zip(UCI_SIGNALS, channels):
        if values.shape[0] != labels.shape[0]:
            raise DatasetFormatError(
                f"{values.shape[0]} windows but {labels.shape[0]} labels", str(signal_dir / f"{signal}_{split}.txt")
            )

    dataset = SequenceDataset(
        windows=np.stack(channels, axis=1),
        labels=labels,
        class_names=list(UCI_CLASS_NAMES),
        channel_names=list(UCI_SIGNALS),
        sample_rate_hz=UCI_SAMPLE_RATE_HZ,
        name=f"ucihar-{split}",
    )
    logger.info("UCI HAR split loaded", split=split, windows=len(dataset), shape=list(dataset.windows.shape[1:]))
    return dataset


# --------------------------------------------------------- synthetic weak set
def largest_remainder_counts(total: int, proportions: Sequence[float]) -> List[int]:
    """Integer counts summing to ``total``; leftovers go to the largest remainders, lowest index first on ties."""
    exact = [total * p for p in proportions]
    counts = [int(np.floor(x)) for x in exact]
    order = sorted(range(len(exact)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in order[: total - sum(counts)]:
        counts[i] += 1
    return counts


def _harmonic(t: np.ndarray, freq: float, amplitude: float, phases: np.ndarray) -> np.ndarray:
    """Fundamental plus half-amplitude second harmonic, one phase pair per axis. Returns [C, len(t)]."""
    return amplitude * (
        np.sin(2 * np.pi * freq * t[None, :] + phases[:, 0:1])
        + 0.5 * np.sin(4 * np.pi * freq * t[None, :] + phases[:, 1:2])
    )


def _burst_envelope(t: np.ndarray, rate_hz: float, offset: float) -> np.ndarray:
    return (0.5 * (1 - np.cos(2 * np.pi * rate_hz * (t - offset)))) ** 2


def synth_weak(config: SynthConfig, seed: int) -> SequenceDataset:
    """Walking-like background with one labeled foreground segment per window."""
    rng = np.random.default_rng(seed)
    n, c, length = config.num_sequences, config.channels, config.seq_len
    counts = largest_remainder_counts(n, config.class_proportions)
    labels = rng.permutation(np.repeat(np.arange(len(counts)), counts))

    t = np.arange(length) / config.sample_rate_hz
    windows = np.empty((n, c, length))
    segments: List[List[Segment]] = []
    for i, label in enumerate(labels):
        signal = _harmonic(t, config.background_freq_hz, config.background_amplitude, rng.uniform(0, 2 * np.pi, (c, 2)))
        seg_len = int(rng.integers(config.segment_len_min, config.segment_len_max + 1))
        start = int(rng.integers(0, length - seg_len + 1))
        end = start + seg_len
        fg_t = t[start:end]
        foreground = _harmonic(
            fg_t, config.foreground_freqs_hz[label], config.foreground_amplitudes[label], rng.uniform(0, 2 * np.pi, (c, 2))
        )
        if label in config.burst_classes:
            foreground = foreground * _burst_envelope(fg_t, config.burst_rate_hz, fg_t[0])
        signal[:, start:end] = foreground
        windows[i] = signal + rng.normal(0.0, config.noise_std, size=(c, length))
        segments.append([(start, end)])

    dataset = SequenceDataset(
        windows=windows,
        labels=labels,
        class_names=list(WEAK_CLASS_NAMES),
        channel_names=SYNTH_CHANNEL_NAMES[:c] if c <= 3 else [f"axis_{k}" for k in range(c)],
        sample_rate_hz=config.sample_rate_hz,
        segments=segments,
        name="synthetic",
    )
    logger.info("Synthetic weak dataset generated", windows=n, seq_len=length, seed=seed, class_counts=counts)
    return dataset


def save_synthetic(dataset: SequenceDataset, out_dir: Union[str, Path], seed: int, config: SynthConfig) -> Tuple[Path, Path]:
    """Little-endian float64 [N, C, L] binary plus a JSON sidecar."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data_path = out_dir / SYNTH_DATA_FILE
    sidecar_path = out_dir / SYNTH_SIDECAR_FILE
    data_path.write_bytes(dataset.windows.astype("<f8").tobytes(order="C"))
    sidecar = {
        "N": len(dataset),
        "C": dataset.num_channels,
        "L": dataset.seq_len,
        "labels": dataset.labels.tolist(),
        "segments": [[list(s) for s in window] for window in dataset.segments or []],
        "class_names": dataset.class_names,
        "channel_names": dataset.channel_names,
        "sample_rate_hz": dataset.sample_rate_hz,
        "seed": seed,
        "config": config.model_dump(mode="json"),
    }
    sidecar_path.write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")
    return data_path, sidecar_path


def load_synthetic(data_dir: Union[str, Path]) -> SequenceDataset:
    data_dir = Path(data_dir)
    data_path = data_dir / SYNTH_DATA_FILE
    sidecar_path = data_dir / SYNTH_SIDECAR_FILE
    if not sidecar_path.is_file() or not data_path.is_file():
        raise DatasetError(f"no synthetic dataset in {data_dir} (expected {SYNTH_DATA_FILE} and {SYNTH_SIDECAR_FILE})")
    try:
        sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
        n, c, length = int(sidecar["N"]), int(sidecar["C"]), int(sidecar["L"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise DatasetFormatError(f"invalid sidecar: {e}", str(sidecar_path))
    values = np.fromfile(data_path, dtype="<f8")
    if values.size != n * c * length:
        raise DatasetFormatError(f"expected {n * c * length} floats, found {values.size}", str(data_path))
    dataset = SequenceDataset(
        windows=values.reshape(n, c, length).astype(np.float64),
        labels=np.asarray(sidecar["labels"], dtype=np.int64),
        class_names=sidecar.get("class_names", list(WEAK_CLASS_NAMES)),
        channel_names=sidecar.get("channel_names", SYNTH_CHANNEL_NAMES[:c]),
        sample_rate_hz=float(sidecar.get("sample_rate_hz", 50.0)),
        segments=[[tuple(s) for s in window] for window in sidecar["segments"]] if sidecar.get("segments") else None,
        name="synthetic",
    )
    logger.info("Synthetic weak dataset loaded", path=str(data_dir), windows=n)
    return dataset


def split(
    dataset: SequenceDataset, fractions: Sequence[float] = (0.7, 0.1, 0.2), seed: int = 0
) -> Tuple[SequenceDataset, ...]:
    """Disjoint shuffled partition; all parts but the last are rounded, the last takes the rest."""
    fractions = validate_fractions(fractions)
    total = len(dataset)
    order = np.random.default_rng(seed).permutation(total)
    sizes = [int(round(total * f)) for f in fractions[:-1]]
    if sum(sizes) > total:
        raise DatasetError(f"cannot split {total} windows by {fractions}")
    bounds = np.cumsum([0] + sizes + [total - sum(sizes)])
    names = ["train", "val", "test"] if len(fractions) == 3 else [f"part{k}" for k in range(len(fractions))]
    return tuple(
        dataset.select(order[lo:hi], name=f"{dataset.name}-{part}")
        for part, lo, hi in zip(names, bounds[:-1], bounds[1:])
    )
