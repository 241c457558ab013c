"""Replicate-level parallelism with deterministic aggregation.

The ORDCAUSAL_THREADS environment variable caps the worker count (default 1,
i.e. serial). Work items are independent, seeded by their own index, and
results are gathered in index order, so output is identical for any worker
count.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable

_ENV_VAR = "ORDCAUSAL_THREADS"


def worker_count() -> int:
    raw = os.environ.get(_ENV_VAR, "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"{_ENV_VAR} must be an integer, got {raw!r}") from None


def map_indexed(fn: Callable[[int], object], n_items: int, workers: int | None = None) -> list:
    """[fn(0), ..., fn(n_items - 1)], possibly computed in parallel."""
    if workers is None:
        workers = worker_count()
    if workers <= 1 or n_items <= 1:
        return [fn(i) for i in range(n_items)]
    chunksize = max(1, n_items // (workers * 4))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n_items), chunksize=chunksize))
