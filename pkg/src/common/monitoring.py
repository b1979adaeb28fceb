"""
Phase timing for commands.
Tracks wall-clock durations of named phases (load, train, evaluate, ...)
so they can be reported in run manifests and forecast results.
"""

import logging
import time
from collections import defaultdict
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Any, Dict, Iterator

from src.common.config import get_settings

logger = logging.getLogger(__name__)


@dataclass
class PhaseMetrics:
    """Container for one timed phase."""

    name: str
    duration_s: float
    timestamp: float


class PerformanceMonitor:
    """Phase timing and summary collection."""

    def __init__(self):
        self.history: list[PhaseMetrics] = []
        self.phase_stats: Dict[str, Dict[str, float]] = defaultdict(
            lambda: {'count': 0, 'total_s': 0.0, 'max_s': 0.0}
        )
        self.start_time = time.perf_counter()

    def add_phase(self, metrics: PhaseMetrics) -> None:
        self.history.append(metrics)
        stats = self.phase_stats[metrics.name]
        stats['count'] += 1
        stats['total_s'] += metrics.duration_s
        stats['max_s'] = max(stats['max_s'], metrics.duration_s)

    @contextmanager
    def track(self, name: str) -> Iterator[None]:
        """Time the enclosed block under ``name``."""
        start = time.perf_counter()
        try:
            yield
        finally:
            duration = time.perf_counter() - start
            self.add_phase(
                PhaseMetrics(
                    name=name, duration_s=duration, timestamp=time.time()
                )
            )
            threshold = get_settings().SLOW_PHASE_THRESHOLD_S
            if duration > threshold:
                logger.warning(f'Slow phase: {name} took {duration:.1f}s')

    def elapsed(self, name: str) -> float:
        if name not in self.phase_stats:
            return 0.0
        return self.phase_stats[name]['total_s']

    def get_summary(self) -> Dict[str, Any]:
        return {
            'uptime_s': time.perf_counter() - self.start_time,
            'phases': {
                name: dict(stats) for name, stats in self.phase_stats.items()
            },
        }
