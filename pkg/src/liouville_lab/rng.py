"""Counter-keyed normal streams.

Replica ``r`` of a run with seed ``s`` lives in block ``r // BLOCK`` whose
generator is seeded by ``SeedSequence([s, stream, block])``.  Any batching of the
replicas, and any number of worker threads, reproduces the same numbers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

BLOCK = 256


def block_normals(seed: int, block: int, dim: int, stream: int = 0) -> np.ndarray:
    """Standard normals of shape ``(BLOCK, dim)`` for one replica block."""
    ss = np.random.SeedSequence([int(seed), int(stream), int(block)])
    return np.random.Generator(np.random.PCG64(ss)).standard_normal((BLOCK, dim))


def normals(seed: int, start: int, size: int, dim: int, stream: int = 0) -> np.ndarray:
    """Rows ``start .. start+size`` of the replica stream, shape ``(size, dim)``."""
    out = np.empty((size, dim))
    r = start
    while r < start + size:
        b, off = divmod(r, BLOCK)
        take = min(BLOCK - off, start + size - r)
        out[r - start:r - start + take] = block_normals(seed, b, dim, stream)[off:off + take]
        r += take
    return out


def batches(n_samples: int, batch: int = BLOCK):
    """Yield ``(start, size)`` covering ``range(n_samples)``."""
    for start in range(0, n_samples, batch):
        yield start, min(batch, n_samples - start)


def map_batches(fn, n_samples: int, threads: int = 1, batch: int = BLOCK) -> list:
    """Apply ``fn(start, size)`` to every batch; results in batch order."""
    jobs = list(batches(n_samples, batch))
    if threads <= 1:
        return [fn(s, k) for s, k in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))
