"""Counter-based random streams and deterministic block-parallel evaluation.

Every draw is addressed by ``(seed, stream, block)``: a Philox generator is
keyed from that tuple, so a block's output never depends on which worker
computed it or in which order blocks finished.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

import numpy as np

from .errors import InvalidConfig

BLOCK_SIZE = 4096
"""Rows generated per independently keyed block."""

# Reserved stream identifiers; user code picks small nonnegative integers.
STREAM_MAIN = 0
STREAM_CALIBRATION = 1
STREAM_AUXILIARY = 2

T = TypeVar("T")


def check_seed(seed: int) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise InvalidConfig(f"seed must be an integer, got {seed!r}")
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise InvalidConfig(f"seed must lie in [0, 2**64), got {seed}")
    return seed


def generator(seed: int, *key: int) -> np.random.Generator:
    """Philox generator for the stream addressed by ``(seed, *key)``."""
    seq = np.random.SeedSequence(check_seed(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


def block_sizes(count: int, block: int = BLOCK_SIZE) -> list[int]:
    full, rest = divmod(count, block)
    return [block] * full + ([rest] if rest else [])


def map_blocks(fn: Callable[[int, int], T], count: int, threads: int = 1,
               block: int = BLOCK_SIZE) -> list[T]:
    """Evaluate ``fn(block_index, size)`` over the blocks covering ``count``
    items, returning results in block order regardless of ``threads``."""
    sizes = block_sizes(count, block)
    if threads <= 1 or len(sizes) == 1:
        return [fn(i, s) for i, s in enumerate(sizes)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(len(sizes)), sizes))


def map_items(fn: Callable[[int], T], count: int, threads: int = 1) -> list[T]:
    """Evaluate ``fn(i)`` for ``i < count`` in index order."""
    if threads <= 1 or count <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(count)))
