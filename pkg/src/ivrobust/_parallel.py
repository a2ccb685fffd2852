"""Deterministic fan-out of independent replicates."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

THREADS_ENV = "IVROBUST_THREADS"


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, "1") or 1)
    return max(1, int(threads))


def substream(seed: int, index: int) -> np.random.Generator:
    """Generator for replicate ``index``; depends only on (seed, index)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def map_replicates(fn, count: int, threads: int | None = None) -> list:
    """``[fn(0), ..., fn(count-1)]`` computed on a thread pool, in index order."""
    threads = resolve_threads(threads)
    if threads == 1 or count < 2:
        return [fn(i) for i in range(count)]
    chunk = max(1, count // (threads * 4))
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(count), chunksize=chunk))
