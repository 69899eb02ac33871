"""Transport solutions by stochastic characteristics: u(t, x) = u0(Y_{0,t}(x)).

Norms are estimated by a tensor quadrature over a truncation box and a Monte
Carlo average over Brownian samples. Every norm carries a leakage diagnostic:
the share of the datum's mass whose forward image leaves the box, which bounds
what truncation hides.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from ._util import SAMPLE_BLOCK, map_blocks, mean_and_halfwidth
from .brownian import BrownianPath, TimeGrid, refine_to, sample_increments, sample_path
from .errors import ConfigError, TruncationWarning
from .field.catalog import ScalarDatum, VectorField
from .flow import BACKWARD, FORWARD, backward_flow, march

LEAKAGE_THRESHOLD = 1e-3


@dataclass(frozen=True)
class QuadratureBox:
    """Tensor quadrature on center + prod_i [-L_i, L_i]."""

    half_width: object  # scalar or per-axis sequence
    nodes_per_axis: object = 64
    rule: str = "midpoint"
    center: object = None
    dim: int = 2

    def __post_init__(self):
        if self.rule not in ("midpoint", "gauss"):
            raise ConfigError(f"unknown quadrature rule {self.rule!r}")
        if np.any(self.half_widths <= 0):
            raise ConfigError("box half-widths must be positive")
        if np.any(self.counts < 1):
            raise ConfigError("need at least one node per axis")

    @property
    def half_widths(self):
        return np.broadcast_to(np.asarray(self.half_width, dtype=float), (self.dim,)).copy()

    @property
    def counts(self):
        return np.broadcast_to(np.asarray(self.nodes_per_axis, dtype=int), (self.dim,)).copy()

    @property
    def origin(self):
        return np.zeros(self.dim) if self.center is None else np.asarray(self.center, dtype=float)

    def _axis(self, i):
        L, m, c = self.half_widths[i], int(self.counts[i]), self.origin[i]
        if self.rule == "midpoint":
            h = 2.0 * L / m
            return c - L + h * (np.arange(m) + 0.5), np.full(m, h)
        x, w = np.polynomial.legendre.leggauss(m)
        return c + L * x, L * w

    @cached_property
    def _tensor(self):
        axes = [self._axis(i) for i in range(self.dim)]
        grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
        nodes = np.stack([g.ravel() for g in grids], axis=-1)
        weights = np.ones(nodes.shape[0])
        for wg in np.meshgrid(*[a[1] for a in axes], indexing="ij"):
            weights = weights * wg.ravel()
        return nodes, weights

    @property
    def nodes(self):
        return self._tensor[0]

    @property
    def weights(self):
        return self._tensor[1]

    @property
    def volume(self):
        return float(np.prod(2.0 * self.half_widths))

    @property
    def spacing(self):
        return 2.0 * self.half_widths / self.counts

    def contains(self, x, margin=0.0):
        x = np.asarray(x, dtype=float)
        return np.all(np.abs(x - self.origin) <= self.half_widths - margin, axis=-1)

    def contains_ball(self, center, radius):
        c = np.asarray(center, dtype=float) - self.origin
        return bool(np.all(np.abs(c) + radius <= self.half_widths))

    def integrate(self, values):
        """Quadrature over the trailing node axis."""
        return np.asarray(values) @ self.weights


def default_box(datum: ScalarDatum, horizon, nodes=64):
    """L = 6 (support radius + sqrt(T)) with an m x m midpoint rule."""
    return QuadratureBox(6.0 * (datum.effective_radius + math.sqrt(horizon)), nodes, "midpoint",
                         dim=datum.dim)


@dataclass(frozen=True)
class TransportSolution:
    """u = u0 o Y_{0,t} on the paths (seed, i) refined ``level`` times from ``base_grid``."""

    datum: ScalarDatum
    drift: VectorField
    base_grid: TimeGrid
    seed: int = 0
    level: int = 0
    zero_noise: bool = False
    jacobian_method: str = "auto"

    def __post_init__(self):
        if self.datum.dim != self.drift.dim:
            raise ConfigError("datum and drift dimensions differ")

    @property
    def dim(self):
        return self.drift.dim

    @property
    def grid(self) -> TimeGrid:
        g = self.base_grid
        for _ in range(self.level):
            g = g.refined()
        return g

    def path(self, sample_index) -> BrownianPath:
        p = sample_path(self.seed, int(sample_index), self.dim, self.base_grid, self.zero_noise)
        return refine_to(p, self.level)

    def increments(self, sample_indices):
        return sample_increments(self.seed, sample_indices, self.dim, self.base_grid, self.level,
                                 self.zero_noise)

    def with_drift(self, drift):
        return TransportSolution(self.datum, drift, self.base_grid, self.seed, self.level,
                                 self.zero_noise, self.jacobian_method)

    def with_datum(self, datum):
        return TransportSolution(datum, self.drift, self.base_grid, self.seed, self.level,
                                 self.zero_noise, self.jacobian_method)

    def with_level(self, level):
        return TransportSolution(self.datum, self.drift, self.base_grid, self.seed, level,
                                 self.zero_noise, self.jacobian_method)


def _check_t(sol, t_index):
    if not 0 <= t_index <= sol.grid.steps:
        raise ConfigError(f"time index {t_index} outside [0, {sol.grid.steps}]")


def solution_value(sol: TransportSolution, t_index, x, sample_index):
    """u(t_k, x) on one Brownian sample."""
    _check_t(sol, t_index)
    y = backward_flow(sol.drift, sol.path(sample_index), 0, t_index, x, jacobian=None).terminal
    return sol.datum.value(y)


def solution_gradient(sol: TransportSolution, t_index, x, sample_index):
    """(DY)^T grad u0(Y): the chain-rule gradient of u(t_k, .) at x."""
    _check_t(sol, t_index)
    res = backward_flow(sol.drift, sol.path(sample_index), 0, t_index, x, jacobian=sol.jacobian_method)
    g = sol.datum.gradient(res.terminal)
    return np.einsum("...ji,...j->...i", res.jacobian, g)


def backward_points(sol: TransportSolution, t_index, x, sample_indices, jacobian=False, incs=None):
    """Y_{0,t}(x) of shape (S, M, d) for a batch of samples, and DY (S, M, d, d) if asked."""
    _check_t(sol, t_index)
    x = np.asarray(x, dtype=float)
    if incs is None:
        incs = sol.increments(sample_indices)
    S = incs.shape[0]
    start = np.broadcast_to(x, (S,) + x.shape)
    if t_index == 0:
        # Y_{0,0} is the identity; skip the bump stencil's rounding
        eye = np.broadcast_to(np.eye(sol.dim), start.shape + (sol.dim,)) if jacobian else None
        return start.copy(), eye
    steps = np.moveaxis(incs[:, :t_index][:, ::-1], 1, 0)[:, :, None, :]  # (t, S, 1, d)
    return march(sol.drift, steps, start, sol.grid.dt, BACKWARD,
                 sol.jacobian_method if jacobian else None, first_index=t_index - 1)


def pull_back(sol: TransportSolution, t_index, x, sample_indices, gradient=False, incs=None):
    """Y_{0,t}(x) for a batch of samples, with u and optionally grad u.

    ``x`` has shape ``(M, d)``; returns ``(values (S, M), grads (S, M, d) or
    None, Y (S, M, d))``.
    """
    Y, J = backward_points(sol, t_index, x, sample_indices, gradient, incs)
    vals = sol.datum.value(Y)
    grads = None
    if gradient:
        grads = np.einsum("...ji,...j->...i", J, sol.datum.gradient(Y))
    return vals, grads, Y


def escape_mask(sol: TransportSolution, t_index, y, box: QuadratureBox, sample_indices, incs=None):
    """True where X_{0,t}(y) leaves the box shrunk by one grid spacing."""
    if incs is None:
        incs = sol.increments(sample_indices)
    S = incs.shape[0]
    steps = np.moveaxis(incs[:, :t_index], 1, 0)[:, :, None, :]
    start = np.broadcast_to(np.asarray(y, dtype=float), (S,) + np.shape(y))
    X, _ = march(sol.drift, steps, start, sol.grid.dt, FORWARD, None)
    return ~box.contains(X, margin=float(np.max(box.spacing)))


@dataclass(frozen=True)
class NormEstimate:
    """Monte Carlo mean of a box integral; ``value`` is E int |.|^p dx."""

    value: float
    halfwidth: float
    per_sample: np.ndarray = field(repr=False)
    p: float
    t_index: int
    leakage: float = 0.0
    warnings: tuple = ()

    @property
    def n_samples(self):
        return int(self.per_sample.shape[0])

    @property
    def norm(self):
        return self.value ** (1.0 / self.p)


def _outside_fraction(weight_fn, box: QuadratureBox):
    """Share of an integrand's mass lying outside the box, from a doubled box."""
    big = QuadratureBox(2.0 * box.half_widths, 2 * box.counts, box.rule, box.center, box.dim)
    total = big.integrate(weight_fn(big.nodes))
    inside = box.integrate(weight_fn(box.nodes))
    if total <= 0:
        return 0.0
    return max(0.0, 1.0 - inside / total)


def estimate_norms(sol: TransportSolution, t_index, ps: Sequence[float], box: QuadratureBox, n_samples=256,
                   gradient=True, leakage=True, workers=1, sample_offset=0):
    """E int_box |u(t)|^p and E int_box |grad u(t)|^p for several p in one pass.

    Returns ``{"lp": {p: NormEstimate}, "grad": {p: NormEstimate}}``.
    """
    _check_t(sol, t_index)
    ps = [float(p) for p in ps]
    if any(not (1.0 <= p < math.inf) for p in ps):
        raise ConfigError("p must lie in [1, inf)")
    nodes, w = box.nodes, box.weights
    u0 = sol.datum.value(nodes)
    g0 = np.linalg.norm(sol.datum.gradient(nodes), axis=-1) if gradient else None
    # mass-carrying nodes for the leakage push-forward
    carriers = np.abs(u0) > 0
    if gradient:
        carriers |= g0 > 0

    def block(a, b):
        idx = range(sample_offset + a, sample_offset + b)
        incs = sol.increments(idx)
        vals, grads, _ = pull_back(sol, t_index, nodes, idx, gradient, incs=incs)
        lp = np.stack([np.abs(vals) ** p @ w for p in ps], axis=1)
        out = [lp]
        if gradient:
            gn = np.linalg.norm(grads, axis=-1)
            out.append(np.stack([gn ** p @ w for p in ps], axis=1))
        if leakage:
            esc = np.zeros((b - a, nodes.shape[0]), dtype=bool)
            if t_index > 0 and carriers.any():
                esc[:, carriers] = escape_mask(sol, t_index, nodes[carriers], box, idx, incs=incs)
            esc_lp = np.stack([(np.abs(u0) ** p * esc) @ w for p in ps], axis=1)
            out.append(esc_lp)
            if gradient:
                out.append(np.stack([(g0 ** p * esc) @ w for p in ps], axis=1))
        return tuple(out)

    run = block
    if t_index == 0:
        # no randomness: one evaluation stands for every sample
        first = block(0, 1)

        def run(a, b):
            return tuple(np.repeat(r, b - a, axis=0) for r in first)

    parts = list(map_blocks(run, n_samples, workers, SAMPLE_BLOCK))
    lp = parts.pop(0)
    gr = parts.pop(0) if gradient else None
    esc_lp = parts.pop(0) if leakage else None
    esc_gr = parts.pop(0) if (leakage and gradient) else None

    def pack(per, esc, weight_fn, j, p):
        leak, warns = 0.0, []
        if leakage:
            mass0 = box.integrate(weight_fn(nodes))
            leak = float(esc[:, j].mean() / mass0) if mass0 > 0 else 0.0
            leak += _outside_fraction(weight_fn, box)
            if leak > LEAKAGE_THRESHOLD:
                warns.append(TruncationWarning(f"leakage {leak:.3g} exceeds {LEAKAGE_THRESHOLD:g} (p={p})"))
        mean, hw = mean_and_halfwidth(per[:, j])
        return NormEstimate(float(mean), float(hw), per[:, j], p, t_index, leak, tuple(warns))

    out = {"lp": {}, "grad": {}}
    for j, p in enumerate(ps):
        out["lp"][p] = pack(lp, esc_lp, lambda x, p=p: np.abs(sol.datum.value(x)) ** p, j, p)
        if gradient:
            out["grad"][p] = pack(gr, esc_gr,
                                  lambda x, p=p: np.linalg.norm(sol.datum.gradient(x), axis=-1) ** p, j, p)
    return out


def lp_norm(sol, t_index, p, box, n_samples=256, workers=1, leakage=True) -> NormEstimate:
    """E int_box |u(t, x)|^p dx."""
    if not 1.0 < p < math.inf:
        raise ConfigError(f"p must lie in (1, inf), got {p}")
    return estimate_norms(sol, t_index, [p], box, n_samples, False, leakage, workers)["lp"][float(p)]


def sobolev_seminorm(sol, t_index, p, box, n_samples=256, workers=1, leakage=True) -> NormEstimate:
    """E int_box |grad u(t, x)|^p dx."""
    if not 1.0 < p < math.inf:
        raise ConfigError(f"p must lie in (1, inf), got {p}")
    return estimate_norms(sol, t_index, [p], box, n_samples, True, leakage, workers)["grad"][float(p)]


def emit_warnings(estimate: NormEstimate):
    for w in estimate.warnings:
        warnings.warn(w, stacklevel=2)
