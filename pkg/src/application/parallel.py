"""
src/application/parallel.py

Ordered fan-out of independent per-cell work onto a thread pool.

Results come back in submission order, and every work item draws from its
own keyed substream, so the outcome does not depend on the worker count.
"""
from __future__ import annotations

import os
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from typing import TypeVar

_T = TypeVar("_T")
_R = TypeVar("_R")

#: Environment variable overriding the default worker count.
THREADS_ENV_VAR = "KINETIC_BGK_THREADS"


def default_workers() -> int:
    """Worker count from ``KINETIC_BGK_THREADS``, else the number of cores."""
    raw = os.environ.get(THREADS_ENV_VAR)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1


def map_ordered(fn: Callable[[_T], _R], items: Sequence[_T], workers: int = 1) -> list[_R]:
    """Apply *fn* to every item; parallel when ``workers > 1``, always in order."""
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, items))
