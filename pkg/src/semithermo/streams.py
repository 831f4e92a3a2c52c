"""Seeded random streams and an order-preserving worker pool.

Every stochastic routine splits its work into fixed-size chunks that do not
depend on the worker count. Chunk ``k`` of routine ``tag`` draws from its own
Philox stream keyed by ``(seed, tag, k)``, and results are merged in chunk
order, so output is identical for any number of workers.
"""

from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

import numba
import numpy as np

T = TypeVar("T")
R = TypeVar("R")

_workers = 1


def stream(seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Counter-based generator for chunk ``index`` of routine ``tag``."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, zlib.crc32(tag.encode()), int(index)])
    return np.random.Generator(np.random.Philox(ss))


def set_workers(n: int | None) -> int:
    """Set the pool size used by :func:`chunk_map` and by the compiled kernels."""
    global _workers
    n = max(1, int(n or 1))
    _workers = n
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    return n


def get_workers() -> int:
    return _workers


def chunk_map(fn: Callable[[T], R], items: Iterable[T], workers: int | None = None) -> list[R]:
    """``[fn(x) for x in items]`` evaluated on a thread pool, results in input order."""
    items = list(items)
    n = workers or _workers
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
