"""Worker-count control and an order-preserving parallel map.

The worker count defaults to the number of CPUs and is capped by the
``FRACFB_WORKERS`` environment variable (or an explicit ``workers``
argument). Results always come back in input order, so outputs do not
depend on scheduling.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

__all__ = ["ENV_WORKERS", "pmap", "worker_count"]

ENV_WORKERS = "FRACFB_WORKERS"


def worker_count(requested: int | None = None) -> int:
    n = os.cpu_count() or 1
    env = os.environ.get(ENV_WORKERS)
    if env:
        try:
            n = min(n, max(1, int(env)))
        except ValueError:
            raise ValueError(f"{ENV_WORKERS} must be a positive integer, got {env!r}") from None
    if requested is not None:
        n = min(n, max(1, int(requested)))
    return n


def pmap(fn, items, workers: int | None = None) -> list:
    items = list(items)
    n = min(worker_count(workers), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))
