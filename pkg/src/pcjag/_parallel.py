import os
from concurrent.futures import ThreadPoolExecutor


def thread_count() -> int:
    """Worker threads from ``PCJAG_THREADS``; 0 (the default) means run inline."""
    try:
        n = int(os.environ.get("PCJAG_THREADS", "0"))
    except ValueError:
        n = 0
    return max(n, 0)


def ordered_map(fn, items):
    """``list(map(fn, items))``, optionally on a thread pool. Results keep
    input order, so any reduction over them stays deterministic."""
    items = list(items)
    n = thread_count()
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
