"""Sampled estimate of the weighted Hölder norm

    ||f||_theta = sup |f(x)| / (1 + |x|) + sup_{0 < |x-y| <= 1} |f(x) - f(y)| / |x-y|^theta.

Both suprema are taken over a finite sample, so the estimate is a lower bound
that can only grow when samples are added.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .._util import quasi_random_points
from ..errors import ConfigError
from .catalog import VectorField


@dataclass(frozen=True)
class HolderSampler:
    singletons: np.ndarray  # (M, d)
    pairs: np.ndarray  # (K, 2, d)

    @classmethod
    def dyadic(cls, d=2, half_width=1.0, n_centers=64, levels=20, seed=0,
               centers=None, directions=None):
        """Centers in a box, each paired with partners at distances 2^-k, k = 0..levels."""
        if centers is None:
            centers = quasi_random_points(n_centers, d, half_width, seed=seed)
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        if directions is None:
            angles = quasi_random_points(centers.shape[0], d, 1.0, seed=seed + 1)
            directions = angles / np.linalg.norm(angles, axis=-1, keepdims=True)
        directions = np.broadcast_to(np.asarray(directions, dtype=float), centers.shape)
        dist = 2.0 ** -np.arange(levels + 1)
        a = np.repeat(centers, dist.size, axis=0)
        b = a + (directions[:, None, :] * dist[None, :, None]).reshape(-1, d)
        return cls(centers, np.stack([a, b], axis=1))

    def merge(self, other: "HolderSampler") -> "HolderSampler":
        return HolderSampler(np.concatenate([self.singletons, other.singletons]),
                             np.concatenate([self.pairs, other.pairs]))


def holder_norm_estimate(field: VectorField, theta, sampler: HolderSampler):
    if not 0.0 < theta <= 1.0:
        raise ConfigError(f"theta must lie in (0, 1], got {theta}")
    n_single = 0 if sampler.singletons is None else len(sampler.singletons)
    n_pairs = 0 if sampler.pairs is None else len(sampler.pairs)
    if n_single == 0 and n_pairs == 0:
        raise ConfigError("empty Hölder sampler")
    growth = 0.0
    if n_single:
        x = sampler.singletons
        growth = float(np.max(np.linalg.norm(field(x), axis=-1) / (1.0 + np.linalg.norm(x, axis=-1))))
    seminorm = 0.0
    if n_pairs:
        a, b = sampler.pairs[:, 0], sampler.pairs[:, 1]
        dist = np.linalg.norm(a - b, axis=-1)
        if np.any(dist <= 0) or np.any(dist > 1.0 + 1e-12):
            raise ConfigError("pairs must satisfy 0 < |x - y| <= 1")
        diff = np.linalg.norm(field(a) - field(b), axis=-1)
        seminorm = float(np.max(diff / dist**theta))
    return growth + seminorm
