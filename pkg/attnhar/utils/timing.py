"""
Wall-clock timing and process memory helpers.
"""
import time
from contextlib import contextmanager
from typing import Iterator

import psutil

from ..core.logging import get_logger
from ..models.result_models import MemoryUsage

logger = get_logger(__name__)


class Stopwatch:
    """Accumulates elapsed seconds over several timed sections."""

    def __init__(self):
        self.seconds = 0.0
        self._started = None

    def start(self) -> None:
        self._started = time.perf_counter()

    def stop(self) -> float:
        if self._started is None:
            return 0.0
        elapsed = time.perf_counter() - self._started
        self.seconds += elapsed
        self._started = None
        return elapsed

    @contextmanager
    def section(self) -> Iterator[None]:
        self.start()
        try:
            yield
        finally:
            self.stop()


@contextmanager
def log_duration(stage: str, **fields) -> Iterator[Stopwatch]:
    """Time a pipeline stage and log its duration."""
    watch = Stopwatch()
    with watch.section():
        yield watch
    logger.info("Stage finished", stage=stage, seconds=round(watch.seconds, 3), **fields)


def memory_usage() -> MemoryUsage:
    process = psutil.Process()
    return MemoryUsage(rss_mb=round(process.memory_info().rss / 1024 / 1024, 1))
