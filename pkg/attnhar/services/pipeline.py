"""
Command workflows: synthesize, train, evaluate, locate and gradient-check.

Each ``run_*`` function takes a validated RunConfig, writes its files under
the run's output directory and returns the report document it wrote.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..core.config import settings
from ..core.exceptions import DatasetError, LocalizationError
from ..core.logging import get_logger
from ..models.config_models import DatasetKind, DatasetSpec, ModelSpec, RunConfig
from ..models.result_models import (
    EvalMetricsDocument,
    GradCheckReport,
    LocalizationReport,
    SegmentLengthStats,
    SequenceLocalization,
    SynthSummary,
    TrainMetricsDocument,
)
from ..utils.io import ensure_dir, write_csv, write_json
from ..utils.timing import log_duration, memory_usage
from . import localization
from .checkpoint import Checkpoint, load_checkpoint, restore_model, save_checkpoint
from .datasets import (
    ChannelStats,
    SequenceDataset,
    compute_channel_stats,
    load_synthetic,
    load_ucihar,
    save_synthetic,
    split,
    standardize,
    synth_weak,
)
from .gradcheck import GradCheckCase, run_gradcheck_suite
from .network import build_model
from .tensor import no_grad
from .training import evaluate, train

logger = get_logger(__name__)

SPLIT_FRACTIONS = (0.7, 0.1, 0.2)

CHECKPOINT_FILE = "checkpoint.json"
FINAL_CHECKPOINT_FILE = "checkpoint_final.json"
HISTORY_FILE = "history.csv"
METRICS_FILE = "metrics.json"
EVAL_FILE = "eval.json"
LOCATE_FILE = "locate.json"
LOCATE_DIR = "curves"
GRADCHECK_FILE = "gradcheck.json"
SUMMARY_FILE = "summary.json"


@dataclass
class DataSplits:
    """Standardized train/val/test splits and the statistics used."""

    train: SequenceDataset
    val: Optional[SequenceDataset]
    test: SequenceDataset
    stats: ChannelStats

    def get(self, name: str) -> SequenceDataset:
        part = {"train": self.train, "val": self.val, "test": self.test}[name]
        if part is None:
            raise DatasetError(f"this dataset has no {name} split")
        return part


def load_raw_splits(dataset: DatasetSpec, seed: int) -> Dict[str, Optional[SequenceDataset]]:
    """Unstandardized splits: UCI HAR train/test, or a seeded 70/10/20 split of the synthetic set."""
    if dataset.kind == DatasetKind.UCIHAR:
        parts = {
            "train": load_ucihar(dataset.data_dir, "train"),
            "val": None,
            "test": load_ucihar(dataset.data_dir, "test"),
        }
    else:
        train_part, val_part, test_part = split(load_synthetic(dataset.data_dir), SPLIT_FRACTIONS, seed)
        parts = {"train": train_part, "val": val_part if len(val_part) else None, "test": test_part}
    if dataset.subset:
        parts = {name: part.head(dataset.subset) if part is not None else None for name, part in parts.items()}
    return parts


def prepare_splits(
    dataset: DatasetSpec, seed: int, stats: Optional[ChannelStats] = None
) -> DataSplits:
    """Load the splits and standardize them with ``stats`` or the training statistics."""
    raw = load_raw_splits(dataset, seed)
    if len(raw["train"]) == 0:
        raise DatasetError("training split is empty")
    stats = stats or compute_channel_stats(raw["train"])
    return DataSplits(
        train=standardize(raw["train"], stats),
        val=standardize(raw["val"], stats) if raw["val"] is not None else None,
        test=standardize(raw["test"], stats),
        stats=stats,
    )


def model_spec_for(run: RunConfig, data: SequenceDataset) -> ModelSpec:
    return ModelSpec.default_layout(
        input_len=data.seq_len,
        input_channels=data.num_channels,
        num_classes=data.num_classes,
        attention_levels=run.model.variant.levels,
        compat_mode=run.model.compat_mode,
        norm_mode=run.model.norm_mode,
    )


# ---------------------------------------------------------------- synth
def run_synthesis(run: RunConfig) -> SynthSummary:
    out_dir = ensure_dir(run.output_dir)
    synth = run.dataset.synth
    with log_duration("synth", windows=synth.num_sequences):
        dataset = synth_weak(synth, run.seed)
        data_path, sidecar_path = save_synthetic(dataset, out_dir, run.seed, synth)

    lengths = [end - start for window in dataset.segments for start, end in window]
    summary = SynthSummary(
        num_sequences=len(dataset),
        seq_len=dataset.seq_len,
        channels=dataset.num_channels,
        seed=run.seed,
        class_counts=dataset.class_counts(),
        segment_length=SegmentLengthStats(min=min(lengths), max=max(lengths), mean=float(np.mean(lengths))),
        data_file=data_path.name,
        sidecar_file=sidecar_path.name,
    )
    write_json(out_dir / SUMMARY_FILE, summary)
    return summary


# ---------------------------------------------------------------- train
def run_training(run: RunConfig) -> TrainMetricsDocument:
    out_dir = ensure_dir(run.output_dir)
    splits = prepare_splits(run.dataset, run.seed)
    spec = model_spec_for(run, splits.train)
    model = build_model(spec, seed=run.seed)
    logger.info(
        "Model built",
        model=spec.display_name(),
        parameters=model.parameter_count(),
        tap_lengths=model.tap_lengths,
        tap_strides=model.tap_strides,
    )

    result = train(model, splits.train, splits.val, run.train)
    write_csv(out_dir / HISTORY_FILE, result.history.CSV_HEADER, result.history.csv_rows())

    final_report = evaluate(model, splits.test)
    best_report = None
    if result.best_state is not None:
        model.load_state_dict(result.best_state)
        best_report = evaluate(model, splits.test)
        final_ckpt = Checkpoint(
            spec=spec,
            params=result.final_state,
            epoch=result.epochs_completed,
            seed=run.seed,
            adam_state=result.optimizer_state,
            channel_stats=splits.stats,
            class_names=splits.train.class_names,
            dataset=run.dataset.kind.value,
            selection="final",
        )
        save_checkpoint(final_ckpt, out_dir / FINAL_CHECKPOINT_FILE)

    ckpt = Checkpoint(
        spec=spec,
        params=result.selected_state,
        epoch=result.selected_epoch,
        seed=run.seed,
        adam_state=result.optimizer_state,
        channel_stats=splits.stats,
        class_names=splits.train.class_names,
        dataset=run.dataset.kind.value,
        selection="best" if result.best_state is not None else "final",
    )
    save_checkpoint(ckpt, out_dir / CHECKPOINT_FILE)

    selected_report = best_report or final_report
    document = TrainMetricsDocument(
        dataset=run.dataset.kind.value,
        model=spec.display_name(),
        seed=run.seed,
        epochs_completed=result.epochs_completed,
        best_epoch=result.best_epoch,
        final=final_report,
        best=best_report,
        test_accuracy=selected_report.accuracy,
        train_seconds=result.seconds,
        memory=memory_usage(),
    )
    write_json(out_dir / METRICS_FILE, document)
    return document


# ---------------------------------------------------------------- eval
def _checkpoint_splits(run: RunConfig, ckpt: Checkpoint) -> DataSplits:
    # Synthetic splits are re-drawn with the training seed so the test part is the same.
    return prepare_splits(run.dataset, ckpt.seed, ckpt.channel_stats)


def run_evaluation(run: RunConfig) -> EvalMetricsDocument:
    ckpt = load_checkpoint(run.checkpoint)
    model = restore_model(ckpt)
    data = _checkpoint_splits(run, ckpt).get(run.dataset.split)
    report = evaluate(model, data)
    out_dir = ensure_dir(run.output_dir)
    document = EvalMetricsDocument(
        checkpoint=str(run.checkpoint),
        dataset=run.dataset.kind.value,
        split=run.dataset.split,
        model=ckpt.spec.display_name(),
        report=report,
        memory=memory_usage(),
    )
    write_json(out_dir / EVAL_FILE, document)
    return document


# ---------------------------------------------------------------- locate
def _select_sequences(run: RunConfig, data: SequenceDataset) -> List[int]:
    if run.locate_indices:
        bad = [i for i in run.locate_indices if not 0 <= i < len(data)]
        if bad:
            raise DatasetError(f"sequence indices {bad} outside [0, {len(data)})")
        return list(run.locate_indices)
    return list(range(min(run.locate_limit, len(data))))


def _attention_profiles(model, windows: np.ndarray, batch_size: int) -> List[list]:
    """Per-sequence CompatibilityProfile lists, level 1 first."""
    profiles = []
    with no_grad():
        for start in range(0, windows.shape[0], batch_size):
            output = model(windows[start:start + batch_size])
            for row in range(output.logits.shape[0]):
                profiles.append(output.profiles(row, model.spec.norm_mode))
    return profiles


def run_localization(run: RunConfig) -> LocalizationReport:
    ckpt = load_checkpoint(run.checkpoint)
    if ckpt.spec.attention_levels == 0:
        raise LocalizationError("localization requires attention: the checkpoint has no attention levels")
    model = restore_model(ckpt)
    data = _checkpoint_splits(run, ckpt).get(run.dataset.split)
    indices = _select_sequences(run, data)
    w = run.density_window

    out_dir = ensure_dir(run.output_dir)
    curves_dir = ensure_dir(out_dir / LOCATE_DIR)
    strides = model.attention_strides
    sequences: List[SequenceLocalization] = []
    density_pairs: List[Tuple[list, list]] = []
    score_pairs: List[Tuple[list, list]] = []
    for index, levels in zip(indices, _attention_profiles(model, data.windows[indices], settings.EVAL_BATCH_SIZE)):
        last = levels[-1]
        stride = strides[-1]
        curve, result = localization.locate(last.scores, w, data.seq_len, level=last.level, stride_to_raw=stride)
        baseline = localization.locate_by_scores(last.scores, w, data.seq_len, level=last.level, stride_to_raw=stride)

        write_csv(
            curves_dir / f"seq_{index:05d}_density.csv",
            ("feature_index", "score", "density", "raw_center"),
            localization.curve_rows(last.scores, curve),
        )
        write_csv(
            curves_dir / f"seq_{index:05d}_profiles.csv",
            ("level", "index", "score", "weight"),
            [row for profile in levels for row in profile.rows()],
        )

        entry = SequenceLocalization(
            index=index,
            label=int(data.labels[index]),
            level=last.level,
            stride_to_raw=stride,
            window_w=w,
            peaks=result.peaks,
            peak_scores=result.scores,
            windows=result.as_lists(),
            score_curve_windows=baseline.as_lists(),
        )
        if data.has_segments:
            truth = data.segments[index]
            entry.ground_truth = [list(s) for s in truth]
            entry.metrics = localization.localization_metrics(result.windows, truth)
            entry.score_curve_metrics = localization.localization_metrics(baseline.windows, truth)
            density_pairs.append((result.windows, truth))
            score_pairs.append((baseline.windows, truth))
        sequences.append(entry)

    report = LocalizationReport(
        checkpoint=str(run.checkpoint),
        model=ckpt.spec.display_name(),
        split=run.dataset.split,
        window_w=w,
        sequences=sequences,
        density=localization.pooled_metrics(density_pairs) if data.has_segments else None,
        score_curve=localization.pooled_metrics(score_pairs) if data.has_segments else None,
    )
    write_json(out_dir / LOCATE_FILE, report)
    logger.info(
        "Localization finished",
        sequences=len(sequences),
        window_w=w,
        hit_rate=report.density.hit_rate if report.density else None,
        mean_best_iou=report.density.mean_best_iou if report.density else None,
    )
    return report


# ---------------------------------------------------------------- gradcheck
def run_gradcheck(
    out: Optional[Path] = None,
    seeds: Optional[int] = None,
    suite: Optional[Dict[str, GradCheckCase]] = None,
) -> GradCheckReport:
    results = run_gradcheck_suite(seeds=seeds, suite=suite)
    report = GradCheckReport(passed=all(r.passed for r in results), results=results)
    if out is not None:
        write_json(out, report)
    return report
