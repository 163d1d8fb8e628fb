"""Counter-based RNG streams and replicate-block execution.

Every Monte Carlo entry point takes a 64-bit master seed.  Work is cut into
replicate blocks of a fixed size; block i draws from a Philox generator keyed
by ``SeedSequence(seed, spawn_key=(salt, i))``.  The block decomposition
depends only on the total replicate count, never on the worker count, so
estimates are bit-identical for a given seed no matter how the blocks are
scheduled.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

DEFAULT_BLOCK = 4096

# Per-operation salts keep streams of different estimators decorrelated
# even when they share a master seed.
SALT_TILTED_WALK = 11
SALT_PALM_REP = 12
SALT_G_PRODUCT = 13
SALT_POPULATION = 14
SALT_FRAG_COUNTS = 21
SALT_FRAG_MASSES = 22
SALT_SKELETON = 23
SALT_LEVY = 24
SALT_CONDITION = 25
SALT_EMP_CUMULANT = 31
SALT_GENERIC = 99


def substream(seed: int, *path: int) -> np.random.Generator:
    """Independent generator addressed by (seed, path...)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("PRESENCE_LAB_WORKERS", "1")))
    except ValueError:
        return 1


def split_blocks(n_total: int, block: int = DEFAULT_BLOCK) -> list[int]:
    """Deterministic block sizes summing to n_total."""
    n_total = int(n_total)
    if n_total <= 0:
        return []
    full, rem = divmod(n_total, block)
    sizes = [block] * full
    if rem:
        sizes.append(rem)
    return sizes


def map_blocks(fn, n_total: int, seed: int, salt: int, workers: int | None = None,
               block: int = DEFAULT_BLOCK) -> list:
    """Run ``fn(block_index, block_size, rng)`` over all blocks.

    Results come back in block order regardless of scheduling, so any
    left-to-right reduction over them is deterministic.
    """
    sizes = split_blocks(n_total, block)
    if workers is None:
        workers = default_workers()

    def run(i: int):
        return fn(i, sizes[i], substream(seed, salt, i))

    if workers <= 1 or len(sizes) <= 1:
        return [run(i) for i in range(len(sizes))]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(run, range(len(sizes))))
