"""Seed-addressed, refinable Brownian paths.

Every path is generated from a Philox counter-based stream whose key is
``(seed, sample_index)`` and whose counter block is selected by the refinement
level, so a path never depends on evaluation order or thread count. Paths live
on power-of-two grids and refine by exact Brownian-bridge midpoint insertion:
the coarse positions are copied verbatim into every finer level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ._util import checksum
from .errors import ConfigError

MAX_STEPS = 2**24
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    steps: int

    def __post_init__(self):
        if not self.horizon > 0:
            raise ConfigError(f"horizon must be positive, got {self.horizon}")
        n = self.steps
        if n < 2 or n & (n - 1):
            raise ConfigError(f"steps must be a power of two >= 2, got {n}")
        if n > MAX_STEPS:
            raise ConfigError(f"steps exceed {MAX_STEPS}")

    @classmethod
    def from_dt(cls, horizon, dt):
        """Smallest power-of-two grid with step <= dt."""
        n = max(2, 2 ** math.ceil(math.log2(horizon / dt - 1e-9)))
        return cls(horizon, n)

    @property
    def dt(self):
        return self.horizon / self.steps

    @property
    def times(self):
        return np.arange(self.steps + 1) * self.dt

    def refined(self):
        return TimeGrid(self.horizon, 2 * self.steps)

    def index_of(self, t):
        """Grid index of time t (must lie on the grid up to rounding)."""
        k = round(t / self.dt)
        if not 0 <= k <= self.steps or abs(k * self.dt - t) > 1e-9 * max(1.0, self.horizon):
            raise ConfigError(f"time {t} is not a node of the grid")
        return k


def _stream(seed, sample_index, level):
    key = ((sample_index & _MASK64) << 64) | (seed & _MASK64)
    return np.random.Generator(np.random.Philox(key=key, counter=[0, 0, level, 0]))


@dataclass(frozen=True, eq=False)
class BrownianPath:
    dim: int
    grid: TimeGrid
    positions: np.ndarray = field(repr=False)  # (n + 1, d), positions[0] == 0
    seed: int = 0
    sample_index: int = 0
    level: int = 0
    zero_noise: bool = False
    draws: np.ndarray | None = field(default=None, repr=False)

    @cached_property
    def increments(self):
        """(n, d) array; at level 0 these are the raw N(0, dt) draws."""
        inc = self.draws if self.draws is not None else np.diff(self.positions, axis=0)
        inc = np.ascontiguousarray(inc)
        inc.flags.writeable = False
        return inc

    def increment(self, i):
        if not 0 <= i < self.grid.steps:
            raise ConfigError(f"increment index {i} outside [0, {self.grid.steps})")
        return self.increments[i]

    def position(self, i):
        if not 0 <= i <= self.grid.steps:
            raise ConfigError(f"position index {i} outside [0, {self.grid.steps}]")
        return self.positions[i]

    def reversed_increments(self, s=0, t=None):
        """Increments s..t-1 in the order a backward march consumes them."""
        t = self.grid.steps if t is None else t
        return self.increments[s:t][::-1]

    def noise_checksum(self, s=0, t=None):
        t = self.grid.steps if t is None else t
        return checksum(self.increments[s:t])


def _frozen(a):
    a.flags.writeable = False
    return a


def sample_path(seed, sample_index, dim, grid: TimeGrid, zero_noise=False) -> BrownianPath:
    """Brownian path with independent N(0, dt) increments per component."""
    if zero_noise:
        zeros = np.zeros((grid.steps + 1, dim))
        return BrownianPath(dim, grid, _frozen(zeros), seed, sample_index, 0, True,
                            _frozen(np.zeros((grid.steps, dim))))
    draws = _stream(seed, sample_index, 0).standard_normal((grid.steps, dim)) * math.sqrt(grid.dt)
    positions = np.zeros((grid.steps + 1, dim))
    np.cumsum(draws, axis=0, out=positions[1:])
    return BrownianPath(dim, grid, _frozen(positions), seed, sample_index, 0, False, _frozen(draws))


def zero_path(dim, grid: TimeGrid) -> BrownianPath:
    return sample_path(0, 0, dim, grid, zero_noise=True)


def refine(path: BrownianPath) -> BrownianPath:
    """Insert Brownian-bridge midpoints: n -> 2n, coarse positions kept exactly."""
    n = path.grid.steps
    if 2 * n > MAX_STEPS:
        raise ConfigError(f"refinement would exceed {MAX_STEPS} steps")
    fine = path.grid.refined()
    level = path.level + 1
    pos = np.empty((2 * n + 1, path.dim))
    pos[::2] = path.positions
    mid = 0.5 * (path.positions[:-1] + path.positions[1:])
    if not path.zero_noise:
        # conditional variance of the midpoint given both ends: dt_coarse / 4
        xi = _stream(path.seed, path.sample_index, level).standard_normal((n, path.dim))
        mid = mid + xi * math.sqrt(path.grid.dt / 4.0)
    pos[1::2] = mid
    return BrownianPath(path.dim, fine, _frozen(pos), path.seed, path.sample_index, level,
                        path.zero_noise)


def refine_to(path: BrownianPath, level: int) -> BrownianPath:
    while path.level < level:
        path = refine(path)
    return path


def downsample(path: BrownianPath) -> np.ndarray:
    """Positions on the grid with half as many steps (every second node)."""
    return path.positions[::2]


def sample_increments(seed, indices, dim, grid: TimeGrid, level=0, zero_noise=False):
    """Stacked increments (len(indices), n * 2**level, d) of bridge-coupled paths."""
    out = []
    for i in indices:
        p = refine_to(sample_path(seed, int(i), dim, grid, zero_noise), level)
        out.append(p.increments)
    return np.stack(out)
