from typing import ClassVar, Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator


class EpochRecord(BaseModel):
    """One row of the training history."""

    epoch: int = Field(..., ge=1)
    loss: float = Field(..., description="Mean cross-entropy over the epoch's batches")
    train_acc: float = Field(..., ge=0, le=1)
    val_acc: Optional[float] = Field(None, ge=0, le=1)
    seconds: float = Field(..., ge=0, description="Wall-clock time of the epoch")


class TrainHistory(BaseModel):
    """Per-epoch losses and accuracies of a training run."""

    records: List[EpochRecord] = Field(default=[])

    CSV_HEADER: ClassVar[Tuple[str, ...]] = ("epoch", "loss", "train_acc", "val_acc", "seconds")

    def append(self, record: EpochRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def losses(self) -> List[float]:
        return [r.loss for r in self.records]

    def best_epoch(self) -> Optional[int]:
        """Epoch with the highest validation accuracy; earliest wins ties."""
        scored = [r for r in self.records if r.val_acc is not None]
        if not scored:
            return None
        return max(scored, key=lambda r: (r.val_acc, -r.epoch)).epoch

    def csv_rows(self) -> List[tuple]:
        return [
            (r.epoch, repr(r.loss), repr(r.train_acc), "" if r.val_acc is None else repr(r.val_acc), f"{r.seconds:.3f}")
            for r in self.records
        ]

    def deterministic_view(self) -> List[tuple]:
        """History without the wall-clock column, for run-to-run comparison."""
        return [(r.epoch, r.loss, r.train_acc, r.val_acc) for r in self.records]


class EvaluationReport(BaseModel):
    """Classification metrics of one pass over a dataset."""

    num_sequences: int = Field(..., ge=1)
    accuracy: float = Field(..., ge=0, le=1)
    per_class_accuracy: Dict[str, Optional[float]] = Field(
        ..., description="Accuracy per class; null when the class is absent"
    )
    confusion_matrix: List[List[int]] = Field(..., description="Rows are true classes, columns predictions")
    class_names: List[str]
    throughput_seqs_per_s: float = Field(..., gt=0, description="Forward-pass sequences per second")
    forward_seconds: float = Field(..., ge=0)


class MemoryUsage(BaseModel):
    rss_mb: float = Field(..., ge=0, description="Resident set size of the process in MiB")


class TrainMetricsDocument(BaseModel):
    """metrics.json written by `train`."""

    dataset: str
    model: str = Field(..., description="Network shorthand, e.g. Net-att2-pc-tanh")
    seed: int
    epochs_completed: int = Field(..., ge=0)
    best_epoch: Optional[int] = None
    final: EvaluationReport = Field(..., description="Test metrics with the final-epoch weights")
    best: Optional[EvaluationReport] = Field(None, description="Test metrics with the best-validation weights")
    test_accuracy: float = Field(..., ge=0, le=1, description="Accuracy of the saved checkpoint on the test split")
    train_seconds: float = Field(..., ge=0)
    memory: MemoryUsage


class EvalMetricsDocument(BaseModel):
    """eval.json written by `eval`."""

    checkpoint: str
    dataset: str
    split: str
    model: str
    report: EvaluationReport
    memory: MemoryUsage


class LocalizationMetrics(BaseModel):
    """Agreement between predicted windows and ground-truth segments."""

    hit_rate: float = Field(..., ge=0, le=1)
    mean_best_iou: float = Field(..., ge=0, le=1)
    num_windows: int = Field(default=0, ge=0)


class SequenceLocalization(BaseModel):
    """Windows found in one sequence."""

    index: int = Field(..., ge=0, description="Position of the sequence in its split")
    label: int
    level: int = Field(..., ge=1, description="Attention level whose scores were used")
    stride_to_raw: int = Field(..., ge=1)
    window_w: int
    peaks: List[int]
    peak_scores: List[float] = Field(..., description="Density value at each peak")
    windows: List[List[int]] = Field(..., description="[start, end) raw-sample intervals ordered by start")
    score_curve_windows: List[List[int]] = Field(default=[], description="Windows from peaks of the raw score curve")
    ground_truth: Optional[List[List[int]]] = None
    metrics: Optional[LocalizationMetrics] = None
    score_curve_metrics: Optional[LocalizationMetrics] = None

    @field_validator("windows", "score_curve_windows")
    @classmethod
    def validate_windows(cls, v):
        for interval in v:
            if len(interval) != 2 or interval[1] <= interval[0]:
                raise ValueError(f"malformed window {interval}")
        return v


class LocalizationReport(BaseModel):
    """locate.json written by `locate`."""

    checkpoint: str
    model: str
    split: str
    window_w: int
    sequences: List[SequenceLocalization]
    density: Optional[LocalizationMetrics] = Field(None, description="Pooled metrics of density peaks")
    score_curve: Optional[LocalizationMetrics] = Field(None, description="Pooled metrics of raw-score peaks")


class GradCheckResult(BaseModel):
    """Worst relative error of one differentiable operation over all seeds."""

    op: str
    seeds: int = Field(..., ge=1)
    max_rel_error: Optional[float] = Field(None, description="Null when the check could not be evaluated")
    worst_seed: Optional[int] = None
    tolerance: float
    passed: bool
    error: Optional[str] = Field(None, description="Failure message, e.g. the non-finite parameter")


class GradCheckReport(BaseModel):
    passed: bool
    results: List[GradCheckResult]

    @property
    def failing_ops(self) -> List[str]:
        return [r.op for r in self.results if not r.passed]


class SegmentLengthStats(BaseModel):
    min: int
    max: int
    mean: float


class SynthSummary(BaseModel):
    """summary.json written next to a generated dataset."""

    num_sequences: int
    seq_len: int
    channels: int
    seed: int
    class_counts: Dict[str, int]
    segment_length: SegmentLengthStats
    data_file: str
    sidecar_file: str
