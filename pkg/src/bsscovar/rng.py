"""Reproducible per-path random streams and deterministic parallel mapping."""

from concurrent.futures import ThreadPoolExecutor

import numpy as np

__all__ = ["path_generator", "CHUNK", "chunk_ranges", "parallel_map"]

# paths per work unit; fixed so results never depend on the worker count
CHUNK = 128


def path_generator(seed, path):
    """Independent generator for path ``path`` of the experiment ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(path),))
    return np.random.Generator(np.random.PCG64(ss))


def chunk_ranges(n_items, chunk=CHUNK):
    return [(s, min(s + chunk, n_items)) for s in range(0, n_items, chunk)]


def parallel_map(fn, items, workers=1):
    """``[fn(x) for x in items]`` on up to ``workers`` threads, order preserved."""
    items = list(items)
    if workers is None or workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=int(workers)) as ex:
        return list(ex.map(fn, items))
