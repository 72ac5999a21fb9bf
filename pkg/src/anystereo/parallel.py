"""Deterministic slab parallelism.

Work is split into index-addressed slabs that write disjoint regions of a
preallocated output, so results are bitwise identical for any thread
count; only wall-clock time changes.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor


def run_indexed(n: int, threads: int, fn) -> None:
    """Call fn(i) for i in range(n), optionally on a thread pool."""
    if n <= 0:
        return
    if threads <= 1 or n == 1:
        for i in range(n):
            fn(i)
        return
    with ThreadPoolExecutor(max_workers=min(threads, n)) as pool:
        # list() propagates the first worker exception.
        list(pool.map(fn, range(n)))
