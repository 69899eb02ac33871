"""Smooth plateau cutoffs.

The radial profile ``h`` equals 1 on [0, 1], vanishes on [2, inf) and is
C-infinity in between (ratio of exp(-1/s) bumps). Two rescalings are offered:
``eta_R(x) = h(|x|/R)`` for localisation and the widening
``eta_eps(x) = h(eps |x|)`` used when regularising initial data.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from ..errors import ConfigError


def _g(s):
    pos = s > 0
    safe = np.where(pos, s, 1.0)
    g = np.where(pos, np.exp(-1.0 / safe), 0.0)
    return g, g / safe**2, g * (1.0 - 2.0 * safe) / safe**4


def profile(r):
    """h(r), h'(r), h''(r) for radii r >= 0."""
    r = np.asarray(r, dtype=float)
    a, da, dda = _g(2.0 - r)
    b, db, ddb = _g(r - 1.0)
    da = -da  # d/dr of g(2 - r)
    s = a + b
    h = a / s
    num = da * b - a * db
    dh = num / s**2
    d2h = (dda * b - a * ddb) / s**2 - 2.0 * num * (da + db) / s**3
    return h, dh, d2h


def _radial_laplacian(rho, d):
    _, dh, d2h = profile(rho)
    safe = np.where(rho > 0, rho, 1.0)
    return d2h + (d - 1) * np.where(rho > 0, dh / safe, 0.0)


def _sup_on_annulus(fn):
    grid = np.linspace(1.0, 2.0, 200_001)
    vals = np.abs(fn(grid))
    i = int(np.argmax(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = minimize_scalar(lambda r: -abs(float(fn(np.array(r)))), bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-12})
    return max(float(vals[i]), -float(res.fun))


@functools.lru_cache(maxsize=None)
def cutoff_constants(d):
    """(K_grad, K_lap): sup |h'| and sup |Laplacian of h(|x|)| in dimension d."""
    k_grad = _sup_on_annulus(lambda r: profile(r)[1])
    k_lap = _sup_on_annulus(lambda r: _radial_laplacian(r, d))
    return k_grad, k_lap


@dataclass(frozen=True)
class CutoffSpec:
    radius: float

    def __post_init__(self):
        if not self.radius >= 1.0:
            raise ConfigError(f"cutoff radius must be >= 1, got {self.radius}")


def _radius(x):
    x = np.asarray(x, dtype=float)
    return x, np.linalg.norm(x, axis=-1)


def cutoff_value(spec: CutoffSpec, x):
    x, r = _radius(x)
    return profile(r / spec.radius)[0]


def cutoff_gradient(spec: CutoffSpec, x):
    x, r = _radius(x)
    dh = profile(r / spec.radius)[1]
    coef = np.where(r > 0, dh / (spec.radius * np.where(r > 0, r, 1.0)), 0.0)
    return coef[..., None] * x


def cutoff_laplacian(spec: CutoffSpec, x):
    x, r = _radius(x)
    return _radial_laplacian(r / spec.radius, x.shape[-1]) / spec.radius**2


def widening_cutoff_value(eps, x):
    """eta(eps x): support grows like 2/eps as eps -> 0."""
    x, r = _radius(x)
    return profile(eps * r)[0]


def widening_cutoff_gradient(eps, x):
    x, r = _radius(x)
    dh = profile(eps * r)[1]
    coef = np.where(r > 0, eps * dh / np.where(r > 0, r, 1.0), 0.0)
    return coef[..., None] * x
