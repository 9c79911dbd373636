"""Ordered map over replicate tasks, optionally on a process pool.

Results always come back in task order, and every task derives its own
randomness from ``(seed, replicate_index)``, so the worker count never
changes an output.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor


def resolve_workers(workers: int | None = None) -> int:
    env = os.environ.get("FPP_LAB_WORKERS")
    if env:
        workers = int(env)
    return max(1, int(workers or 1))


def ordered_map(fn, tasks, workers: int = 1) -> list:
    tasks = list(tasks)
    if workers <= 1 or len(tasks) < 2:
        return [fn(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, tasks, chunksize=chunk))
