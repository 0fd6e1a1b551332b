"""Counter-based random streams.

Every block of samples gets its own Philox generator whose 256-bit counter is
seeded with the block coordinates, so the numbers drawn for block ``b`` depend
only on ``(seed, stream, b)`` and never on which thread produced them or in what
order blocks were scheduled.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

BLOCK = 1 << 15


def block_rng(seed: int, stream: int, block: int) -> np.random.Generator:
    if seed < 0 or stream < 0 or block < 0:
        raise ValueError("seed, stream and block must be nonnegative")
    bitgen = np.random.Philox(key=int(seed), counter=[0, 0, int(stream), int(block)])
    return np.random.Generator(bitgen)


def block_sizes(n: int, block: int = BLOCK):
    full, rest = divmod(int(n), block)
    return [block] * full + ([rest] if rest else [])


def map_blocks(fn, sizes, workers: int = 1):
    """Apply ``fn(block_index, size)`` to every block and return results in block order."""
    jobs = list(enumerate(sizes))
    if workers <= 1 or len(jobs) <= 1:
        return [fn(i, s) for i, s in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


def log_uniform(rng: np.random.Generator, lo, hi, size=None):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    return np.exp(rng.uniform(np.log(lo), np.log(hi), size=size))
