"""Replica fan-out.  Every task carries its own seed and replica index, so the
result list is identical for any worker count."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor


def map_replicas(fn, tasks, jobs: int = 1) -> list:
    tasks = list(tasks)
    if jobs is None or jobs <= 1 or len(tasks) < 2:
        return [fn(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * jobs))
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks, chunksize=chunk))
