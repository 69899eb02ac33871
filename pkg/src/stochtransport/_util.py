import hashlib
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.stats import qmc

# Monte Carlo work is always cut into blocks of this many samples, whatever the
# worker count, so that every array operation sees the same shapes.
SAMPLE_BLOCK = 8


def quasi_random_points(n, d, half_width, seed=0, center=None):
    """Scrambled Halton points in the box center + [-half_width, half_width]^d."""
    sampler = qmc.Halton(d=d, scramble=True, seed=seed)
    pts = (2.0 * sampler.random(n) - 1.0) * half_width
    if center is not None:
        pts = pts + np.asarray(center, dtype=float)
    return pts


def checksum(array):
    """64-bit digest of the raw bytes of ``array``."""
    data = np.ascontiguousarray(array, dtype=np.float64).tobytes()
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


def map_blocks(fn, n_items, workers=1, block=SAMPLE_BLOCK):
    """Apply ``fn(start, stop)`` over fixed blocks and concatenate in order.

    ``fn`` must return an array (or tuple of arrays) whose leading axis has
    length ``stop - start``.
    """
    bounds = [(a, min(a + block, n_items)) for a in range(0, n_items, block)]
    if workers <= 1 or len(bounds) == 1:
        parts = [fn(a, b) for a, b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda ab: fn(*ab), bounds))
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(cols, axis=0) for cols in zip(*parts))
    return np.concatenate(parts, axis=0)


def mean_and_halfwidth(values, z=1.96):
    """Sample mean and normal-approximation CI half-width along axis 0."""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    mean = values.mean(axis=0)
    if n < 2:
        return mean, np.zeros_like(mean)
    return mean, z * values.std(axis=0, ddof=1) / math.sqrt(n)
