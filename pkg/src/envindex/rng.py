"""Counter-based random substreams.

Every block of draws gets its own Philox stream keyed by ``(seed, stream,
block)``, so the values produced for a block never depend on how blocks
are distributed over workers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

BLOCK = 4096


def block_generator(seed: int, block: int, stream: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, int(stream), int(block)])
    return np.random.Generator(np.random.Philox(ss))


def blocks(n: int, size: int = BLOCK):
    return [(i, lo, min(lo + size, n)) for i, lo in enumerate(range(0, n, size))]


def map_blocks(fn, n: int, workers: int = 1, size: int = BLOCK):
    """Apply ``fn(block_index, start, stop)`` to every block, results in block order."""
    parts = blocks(n, size)
    if workers <= 1 or len(parts) == 1:
        return [fn(*p) for p in parts]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(lambda p: fn(*p), parts))
