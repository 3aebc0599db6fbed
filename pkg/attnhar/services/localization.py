"""
Compatibility density, peak picking and raw-sample activity windows.

Scores live in feature coordinates of one attention level; ``stride_to_raw``
maps a feature index i to raw sample i * stride_to_raw.
"""
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np

from ..core.exceptions import LocalizationError
from ..core.logging import get_logger
from ..models.result_models import LocalizationMetrics
from ..utils.validators import validate_interval

logger = get_logger(__name__)

Interval = Tuple[int, int]


@dataclass
class DensityCurve:
    """d_1..d_n over one level's feature positions."""

    values: np.ndarray
    window_w: int
    level: int = 1
    stride_to_raw: int = 1

    def __post_init__(self):
        if self.window_w < 2 or self.window_w % 2:
            raise LocalizationError(f"window width w must be even and >= 2, got {self.window_w}")
        if self.stride_to_raw < 1:
            raise LocalizationError(f"stride_to_raw must be >= 1, got {self.stride_to_raw}")

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    def raw_centers(self) -> np.ndarray:
        return np.arange(self.n) * self.stride_to_raw


@dataclass
class LocalizationResult:
    """Peaks of a curve and the raw windows they stand for, ordered by start."""

    peaks: List[int]
    windows: List[Interval]
    scores: List[float]
    level: int = 1
    stride_to_raw: int = 1
    window_w: int = 2
    source: str = field(default="density")

    def as_lists(self) -> List[List[int]]:
        return [[start, end] for start, end in self.windows]


def _as_scores(scores: Union[Sequence[float], np.ndarray]) -> np.ndarray:
    values = np.asarray(scores, dtype=np.float64)
    if values.ndim != 1 or values.size < 1:
        raise LocalizationError(f"scores must be a non-empty vector, got shape {values.shape}")
    if not np.isfinite(values).all():
        raise LocalizationError("scores contain NaN or Inf")
    return values


def density(
    scores: Union[Sequence[float], np.ndarray], w: int, level: int = 1, stride_to_raw: int = 1
) -> DensityCurve:
    """Clamped sliding-window sum: d_i = sum of c_j for |j - i| <= w/2 within [0, n)."""
    values = _as_scores(scores)
    n = values.size
    if w <= 0 or w % 2:
        raise LocalizationError(f"window width w must be a positive even number, got {w}")
    if w >= 2 * n:
        raise LocalizationError(f"window width w={w} must be smaller than 2n={2 * n}")
    half = w // 2
    out = np.empty(n)
    for i in range(n):
        out[i] = math.fsum(values[max(0, i - half):min(n, i + half + 1)])
    return DensityCurve(values=out, window_w=w, level=level, stride_to_raw=stride_to_raw)


def score_curve(
    scores: Union[Sequence[float], np.ndarray], w: int, level: int = 1, stride_to_raw: int = 1
) -> DensityCurve:
    """The raw score curve with the same window bookkeeping, as a peak-picking baseline."""
    return DensityCurve(values=_as_scores(scores).copy(), window_w=w, level=level, stride_to_raw=stride_to_raw)


def find_peaks(curve: Union[DensityCurve, np.ndarray]) -> List[int]:
    """Strict local maxima; an endpoint counts when it beats its single neighbour."""
    values = curve.values if isinstance(curve, DensityCurve) else np.asarray(curve, dtype=np.float64)
    n = values.size
    if n < 2:
        return []
    greater_left = np.empty(n, dtype=bool)
    greater_right = np.empty(n, dtype=bool)
    greater_left[0] = True
    greater_left[1:] = values[1:] > values[:-1]
    greater_right[-1] = True
    greater_right[:-1] = values[:-1] > values[1:]
    return [int(i) for i in np.flatnonzero(greater_left & greater_right)]


def to_raw_windows(peaks: Iterable[int], curve: DensityCurve, sequence_len: int) -> LocalizationResult:
    """[center - (w/2)*stride, center + (w/2)*stride) around each peak, clamped to the sequence."""
    if sequence_len < 1:
        raise LocalizationError(f"sequence_len must be >= 1, got {sequence_len}")
    half = (curve.window_w // 2) * curve.stride_to_raw
    peaks = sorted(int(p) for p in peaks)
    windows = []
    for peak in peaks:
        if not 0 <= peak < curve.n:
            raise LocalizationError(f"peak {peak} outside the curve of length {curve.n}")
        center = peak * curve.stride_to_raw
        windows.append((max(0, center - half), min(sequence_len, center + half)))
    return LocalizationResult(
        peaks=peaks,
        windows=windows,
        scores=[float(curve.values[p]) for p in peaks],
        level=curve.level,
        stride_to_raw=curve.stride_to_raw,
        window_w=curve.window_w,
    )


def _iou(a: Interval, b: Interval) -> float:
    inter = max(0, min(a[1], b[1]) - max(a[0], b[0]))
    union = (a[1] - a[0]) + (b[1] - b[0]) - inter
    return inter / union


def _window_scores(windows: Sequence[Interval], gt_segments: Sequence[Interval]) -> Tuple[List[bool], List[float]]:
    for interval in list(windows) + list(gt_segments):
        validate_interval(interval)
    hits, best = [], []
    for start, end in windows:
        center = (start + end) / 2
        hits.append(any(g_start <= center < g_end for g_start, g_end in gt_segments))
        best.append(max((_iou((start, end), gt) for gt in gt_segments), default=0.0))
    return hits, best


def localization_metrics(windows: Sequence[Interval], gt_segments: Sequence[Interval]) -> LocalizationMetrics:
    """Hit rate of window centers and mean best IoU against ground truth."""
    hits, best = _window_scores(windows, gt_segments)
    if not hits:
        return LocalizationMetrics(hit_rate=0.0, mean_best_iou=0.0, num_windows=0)
    return LocalizationMetrics(
        hit_rate=sum(hits) / len(hits), mean_best_iou=float(np.mean(best)), num_windows=len(hits)
    )


def pooled_metrics(pairs: Iterable[Tuple[Sequence[Interval], Sequence[Interval]]]) -> LocalizationMetrics:
    """Metrics over the windows of many sequences taken together."""
    hits, best = [], []
    for windows, gt_segments in pairs:
        h, b = _window_scores(windows, gt_segments)
        hits.extend(h)
        best.extend(b)
    if not hits:
        return LocalizationMetrics(hit_rate=0.0, mean_best_iou=0.0, num_windows=0)
    return LocalizationMetrics(hit_rate=sum(hits) / len(hits), mean_best_iou=float(np.mean(best)), num_windows=len(hits))


def locate(
    scores: Union[Sequence[float], np.ndarray], w: int, sequence_len: int, level: int = 1, stride_to_raw: int = 1
) -> Tuple[DensityCurve, LocalizationResult]:
    """density -> find_peaks -> to_raw_windows."""
    curve = density(scores, w, level=level, stride_to_raw=stride_to_raw)
    return curve, to_raw_windows(find_peaks(curve), curve, sequence_len)


def locate_by_scores(
    scores: Union[Sequence[float], np.ndarray], w: int, sequence_len: int, level: int = 1, stride_to_raw: int = 1
) -> LocalizationResult:
    curve = score_curve(scores, w, level=level, stride_to_raw=stride_to_raw)
    result = to_raw_windows(find_peaks(curve), curve, sequence_len)
    result.source = "score"
    return result


def curve_rows(scores: np.ndarray, curve: DensityCurve) -> List[Tuple[int, float, float, int]]:
    """CSV rows (feature_index, score, density, raw_center)."""
    centers = curve.raw_centers()
    return [(i, float(scores[i]), float(curve.values[i]), int(centers[i])) for i in range(curve.n)]
