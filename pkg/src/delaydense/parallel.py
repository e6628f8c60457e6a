"""Deterministic chunked parallelism.

Work is split into fixed-size chunks (independent of the worker count) and
each chunk writes to a disjoint slice of a preallocated output, so results
are bitwise identical no matter how many threads run them.  The compiled
kernels release the GIL, so threads give real speedup; the pure backend
just runs the same chunks with less concurrency benefit.

DELAYDENSE_THREADS caps the worker count (default: cpu count).
"""

import os
from concurrent.futures import ThreadPoolExecutor

CHUNK = 2048


def worker_count() -> int:
    env = os.environ.get("DELAYDENSE_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return max(1, os.cpu_count() or 1)


def chunk_ranges(n_items: int, chunk: int = CHUNK):
    return [(i, min(i + chunk, n_items)) for i in range(0, n_items, chunk)]


def run_chunked(fn, n_items: int, chunk: int = CHUNK):
    """Call fn(lo, hi) for fixed chunk boundaries, possibly in parallel.

    fn must write its results into preallocated storage by index; return
    values are ignored.
    """
    ranges = chunk_ranges(n_items, chunk)
    workers = min(worker_count(), len(ranges)) or 1
    if workers == 1:
        for lo, hi in ranges:
            fn(lo, hi)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        # materialize to propagate exceptions
        list(pool.map(lambda r: fn(*r), ranges))
