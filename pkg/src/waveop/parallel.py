"""Thread-capped parallel map with deterministic gather."""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

LOG = logging.getLogger("waveop.parallel")

THREADS_ENV = "WAVEOP_THREADS"

T = TypeVar("T")
R = TypeVar("R")


def worker_count() -> int:
    """Number of workers allowed by WAVEOP_THREADS (defaults to the CPU count)."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None or not raw.strip():
        return os.cpu_count() or 1
    try:
        value = int(raw)
    except ValueError:
        LOG.warning("Ignoring non-integer %s=%r", THREADS_ENV, raw)
        return os.cpu_count() or 1
    return max(1, value)


def parallel_map(func: Callable[[T], R], items: Iterable[T]) -> list[R]:
    """Apply func to every item; results come back in input order.

    The heavy lifting in callers is BLAS/LAPACK or FFT work, which releases
    the GIL, so threads are enough.
    """
    items = list(items)
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [func(item) for item in items]
    LOG.debug("parallel_map over %d items with %d workers", len(items), workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))
