"""Deterministic parallel map over independent tasks."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor


def parallel_map(fn, tasks, jobs: int = 1):
    """``[fn(t) for t in tasks]``, optionally in worker processes; order is preserved."""
    tasks = list(tasks)
    if jobs is None or jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as ex:
        return list(ex.map(fn, tasks))
