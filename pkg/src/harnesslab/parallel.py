"""Replica-level parallelism with deterministic, order-fixed results.

Work is split by replica; results are returned in replica order so that any
reduction over them is independent of the thread count.  The compiled core
releases the GIL inside its loops, so threads give real concurrency there.
"""

from concurrent.futures import ThreadPoolExecutor

from .errors import ConfigError


def resolve_threads(threads):
    if threads is None:
        return 1
    threads = int(threads)
    if threads < 1:
        raise ConfigError("threads must be a positive integer")
    return threads


def map_replicas(fn, replicas, threads=1):
    """``[fn(r) for r in replicas]`` computed on up to ``threads`` workers."""
    replicas = list(replicas)
    threads = resolve_threads(threads)
    if threads == 1 or len(replicas) < 2:
        return [fn(r) for r in replicas]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, replicas))
