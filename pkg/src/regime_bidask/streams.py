"""Seeded random streams for batched Monte Carlo.

Paths are processed in fixed-size blocks.  Block ``b`` draws from a Philox
generator keyed by ``(seed, b)``, so the output depends only on the seed, the
path count and the block size, never on how blocks are scheduled across
threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

import numpy as np

BLOCK_SIZE = 16384

T = TypeVar("T")


def block_generator(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


def block_ranges(n_paths: int, block_size: int = BLOCK_SIZE) -> list[tuple[int, int]]:
    if n_paths <= 0:
        raise ValueError("n_paths must be positive")
    return [(s, min(s + block_size, n_paths)) for s in range(0, n_paths, block_size)]


def map_blocks(
    fn: Callable[[np.random.Generator, int], T],
    seed: int,
    n_paths: int,
    threads: int = 1,
    block_size: int = BLOCK_SIZE,
) -> list[T]:
    """Run ``fn(rng, n_block)`` on every block; results come back in block order."""
    ranges = block_ranges(n_paths, block_size)

    def run(b: int) -> T:
        start, stop = ranges[b]
        return fn(block_generator(seed, b), stop - start)

    if threads <= 1 or len(ranges) == 1:
        return [run(b) for b in range(len(ranges))]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, range(len(ranges))))
