"""Channel-parallel execution with a deterministic, index-ordered merge."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor


def map_indexed(fn, count: int, workers: int | None):
    """Evaluate fn(k) for k in range(count); results come back in index order
    regardless of scheduling, so worker count never changes the outcome.
    """
    if workers is not None and workers > 1 and count > 1:
        with ThreadPoolExecutor(max_workers=min(workers, count)) as pool:
            return list(pool.map(fn, range(count)))
    return [fn(k) for k in range(count)]
