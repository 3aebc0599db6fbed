"""
Validation utilities for intervals, windows and index lists.
"""

import re
from typing import List, Sequence, Tuple

from ..core.exceptions import ConfigurationError, LocalizationError


def validate_interval(interval: Sequence[int]) -> Tuple[int, int]:
    """Check a half-open [start, end) interval and return it as a tuple."""
    if len(interval) != 2:
        raise LocalizationError(f"interval must have two bounds, got {list(interval)}")
    start, end = int(interval[0]), int(interval[1])
    if end <= start:
        raise LocalizationError(f"malformed interval [{start}, {end}): end must exceed start")
    return start, end


def validate_fractions(fractions: Sequence[float]) -> Tuple[float, ...]:
    if not fractions or any(f < 0 for f in fractions):
        raise ConfigurationError(f"split fractions must be non-negative, got {list(fractions)}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigurationError(f"split fractions must sum to 1, got {sum(fractions):.6f}")
    return tuple(float(f) for f in fractions)


def parse_indices(text: str) -> List[int]:
    """Parse "3,7,10-12" into [3, 7, 10, 11, 12]."""
    if not text:
        return []

    indices: List[int] = []
    for token in re.split(r"\s*,\s*", text.strip()):
        match = re.fullmatch(r"(\d+)(?:-(\d+))?", token)
        if not match:
            raise ConfigurationError(f"invalid index token {token!r}")
        first = int(match.group(1))
        last = int(match.group(2)) if match.group(2) else first
        if last < first:
            raise ConfigurationError(f"invalid index range {token!r}")
        indices.extend(range(first, last + 1))
    return indices
