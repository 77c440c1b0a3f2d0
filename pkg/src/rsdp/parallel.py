"""Chunked path-parallel execution.

Paths are split into fixed-size chunks independent of the worker count, and
chunk results are returned in chunk order, so results never depend on
scheduling.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Sequence

CHUNK = 250


def chunks(paths: int, size: int = CHUNK) -> list[range]:
    return [range(a, min(a + size, paths)) for a in range(0, paths, size)]


def run_chunks(fn: Callable[..., Any], jobs: Sequence[tuple], workers: int = 1) -> list[Any]:
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*jobs)))
