"""
Duration Logging

Logs the start and elapsed time of long-running units of work
(CLI commands, pipeline steps, ablation variants).
"""

import time
import logging
from contextlib import contextmanager
from typing import Iterator

logger = logging.getLogger(__name__)


@contextmanager
def log_duration(label: str, log: logging.Logger = logger) -> Iterator[None]:
    """
    Log when `label` starts and how long it took.

    Usage:
        with log_duration("step 2"):
            ...
    """
    start_time = time.perf_counter()
    log.info(f"{label} - started")
    try:
        yield
    except Exception:
        duration = time.perf_counter() - start_time
        log.error(f"{label} - failed after {duration:.3f}s")
        raise
    duration = time.perf_counter() - start_time
    log.info(f"{label} - Duration: {duration:.3f}s")
