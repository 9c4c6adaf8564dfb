"""Ordered, optionally threaded map used for independent trials."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

THREADS_ENV = "HYPFTS_THREADS"


def thread_count():
    """Worker threads from $HYPFTS_THREADS (default 1, i.e. sequential)."""
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def ordered_map(fn, items):
    """Iterator over fn(item) in input order.

    Sequentially this is lazy, so a consumer that stops at the first failure
    skips the remaining work. With several threads all items are submitted
    but results are still yielded in order.
    """
    threads = thread_count()
    if threads == 1:
        return (fn(item) for item in items)
    pool = ThreadPoolExecutor(max_workers=threads)

    def gen():
        try:
            yield from pool.map(fn, items)
        finally:
            pool.shutdown(wait=False, cancel_futures=True)

    return gen()
