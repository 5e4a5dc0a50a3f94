"""Counter-based random streams and thread-count independent block execution."""

from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

import numpy as np

BLOCK = 8192

R = TypeVar("R")


def block_generator(seed: int, stream: str, *indices: int) -> np.random.Generator:
    """Philox generator keyed by (seed, stream name, counters such as step and block)."""
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    key = np.random.SeedSequence(int(seed), spawn_key=(zlib.crc32(stream.encode()),) + tuple(int(i) for i in indices))
    return np.random.Generator(np.random.Philox(key))


def block_slices(n: int, block: int = BLOCK) -> list[slice]:
    return [slice(i, min(i + block, n)) for i in range(0, n, block)]


def map_blocks(fn: Callable[[int, slice], R], n: int, threads: int = 1, block: int = BLOCK) -> list[R]:
    """Apply fn(block_index, slice) over fixed-size blocks; results in block order.

    Blocks are fixed by ``n`` and ``block`` only, so results do not depend on
    ``threads``.
    """
    slices = block_slices(n, block)
    if threads <= 1 or len(slices) == 1:
        return [fn(i, s) for i, s in enumerate(slices)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(len(slices)), slices))
