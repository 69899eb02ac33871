"""Pathwise checks of the weak (test-function) formulation.

For a test function phi, the pairing Q(t) = int u(t, x) phi(x) dx of the
characteristic solution must satisfy, up to time discretisation,

    Q(t) - Q(0) + sum_k int b.grad u(t_k) phi dt
         - sum_k int u(t_k) d_i phi dx dB_k^i - 1/2 sum_k int u(t_k) Lap phi dt = 0

(left-point sums), or the same with midpoint stochastic sums and no Laplacian
term. All quantities for every grid time come from one backward sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._util import map_blocks, mean_and_halfwidth
from .errors import ConfigError
from .flow import backward_flow_all_starts
from .transport import QuadratureBox, TransportSolution


@dataclass(frozen=True)
class TestFunction:
    """Compactly supported smooth phi with derivatives up to second order."""

    __test__ = False  # not a pytest class

    value: object
    gradient: object
    hessian: object
    support_radius: float
    center: np.ndarray
    label: str = "phi"

    def laplacian(self, x):
        return np.trace(self.hessian(x), axis1=-2, axis2=-1)

    def __call__(self, x):
        return self.value(np.asarray(x, dtype=float))

    def support_box(self, nodes=32, rule="midpoint"):
        return QuadratureBox(self.support_radius, nodes, rule, center=self.center, dim=len(self.center))


def bump_test_function(center=(0.0, 0.0), radius=1.0, label=None) -> TestFunction:
    """phi(x) = exp(1 - 1/(1 - |x-c|^2/r^2)) inside the ball, 0 outside."""
    c = np.asarray(center, dtype=float)
    r2 = radius * radius

    def parts(x):
        z = np.asarray(x, dtype=float) - c
        s = np.sum(z * z, axis=-1) / r2
        inside = s < 1.0
        q = np.where(inside, 1.0 - s, 1.0)
        phi = np.where(inside, np.exp(1.0 - 1.0 / q), 0.0)
        return z, q, phi

    def value(x):
        return parts(x)[2]

    def gradient(x):
        z, q, phi = parts(x)
        return (-2.0 / r2) * (phi / q**2)[..., None] * z

    def hessian(x):
        z, q, phi = parts(x)
        f1 = -phi / q**2  # d phi / ds
        f2 = phi * (1.0 - 2.0 * q) / q**4  # d^2 phi / ds^2
        d = z.shape[-1]
        eye = np.eye(d)
        return (2.0 / r2) * f1[..., None, None] * eye + (4.0 / r2**2) * f2[..., None, None] * (
            z[..., :, None] * z[..., None, :])

    label = label or f"bump@({', '.join(f'{v:g}' for v in c)})r{radius:g}"
    return TestFunction(value, gradient, hessian, float(radius), c, label)


def test_function_catalog(datum_radius=1.0, radii=(0.5, 1.0)):
    """Radial bumps at overlapping, boundary-straddling and disjoint centres.

    Centres are (0, 0), (datum_radius, 0) and (datum_radius + 3, 0), relative
    to a datum supported in the ball of radius ``datum_radius``.
    """
    centers = [(0.0, 0.0), (datum_radius, 0.0), (datum_radius + 3.0, 0.0)]
    return [bump_test_function(c, r) for c in centers for r in radii]


test_function_catalog.__test__ = False


def _check_box(phi: TestFunction, box: QuadratureBox):
    if not box.contains_ball(phi.center, phi.support_radius):
        raise ConfigError(f"quadrature box does not contain the support of {phi.label}")


@dataclass(frozen=True)
class PairingTerms:
    """Per-time quadratures for one sample; leading axis is the grid time k = 0..K.

    ``Q`` (K+1, F) pairings, ``D`` drift term int b.grad u phi, ``S`` (K+1, F, d)
    int u d_i phi, ``L`` int u Lap phi, ``H`` (K+1, F, d, d) int u d_i d_j phi;
    ``increments`` (K, d) and ``dt``.
    """

    Q: np.ndarray
    D: np.ndarray
    S: np.ndarray
    L: np.ndarray
    H: np.ndarray
    increments: np.ndarray
    dt: float

    def ito_residual(self):
        """R(t_k) for all k with left-point sums."""
        dB = self.increments
        inc = self.D[:-1] * self.dt - np.einsum("kfi,ki->kf", self.S[:-1], dB) - 0.5 * self.L[:-1] * self.dt
        return self._series(inc)

    def stratonovich_residual(self):
        dB = self.increments
        mid = 0.5 * (self.S[:-1] + self.S[1:])
        inc = self.D[:-1] * self.dt - np.einsum("kfi,ki->kf", mid, dB)
        return self._series(inc)

    def _series(self, inc):
        out = self.Q - self.Q[0]
        out[1:] += np.cumsum(inc, axis=0)
        return out

    def compensators(self):
        """(discrete  1/2 sum H:dB dB^T,  quadratic-variation  1/2 sum L dt) up to each time."""
        dB = self.increments
        disc = 0.5 * np.einsum("kfij,ki,kj->kf", self.H[:-1], dB, dB)
        cont = 0.5 * self.L[:-1] * self.dt
        z = np.zeros((1,) + disc.shape[1:])
        return np.concatenate([z, np.cumsum(disc, 0)]), np.concatenate([z, np.cumsum(cont, 0)])

    def compensator_defect(self, discrete=True):
        """(midpoint sum - left-point sum) - compensator, for all times."""
        dB = self.increments
        diff = 0.5 * np.einsum("kfi,ki->kf", self.S[1:] - self.S[:-1], dB)
        z = np.zeros((1,) + diff.shape[1:])
        gap = np.concatenate([z, np.cumsum(diff, 0)])
        disc, cont = self.compensators()
        return gap - (disc if discrete else cont)

    def predicted_qv_increments(self):
        return np.sum(self.S[:-1] ** 2, axis=-1) * self.dt


def pairing_terms(sol: TransportSolution, phis: Sequence[TestFunction], sample_index, t_max=None, boxes=None,
                  nodes=48, gradient=True) -> PairingTerms:
    """All weak-form quadratures for grid times 0..t_max on one sample."""
    n = sol.grid.steps
    t_max = n if t_max is None else t_max
    if not 0 <= t_max <= n:
        raise ConfigError(f"time index {t_max} outside [0, {n}]")
    boxes = [phi.support_box(nodes) for phi in phis] if boxes is None else list(boxes)
    if len(boxes) != len(phis):
        raise ConfigError("one quadrature box per test function is required")
    for phi, box in zip(phis, boxes):
        _check_box(phi, box)
    # only nodes inside the open support carry weight in any of the integrals
    keep = [phi.value(b.nodes) > 0 for phi, b in zip(phis, boxes)]
    sizes = [int(k.sum()) for k in keep]
    all_nodes = np.concatenate([b.nodes[k] for b, k in zip(boxes, keep)])
    incs = np.asarray(sol.path(sample_index).increments[:t_max])
    Y, J = backward_flow_all_starts(sol.drift, incs, all_nodes, sol.grid.dt,
                                    sol.jacobian_method if gradient else None)
    U = sol.datum.value(Y)  # (K+1, M)
    if gradient:
        grad_u = np.einsum("...ji,...j->...i", J, sol.datum.gradient(Y))
        drift_dot = np.einsum("mi,kmi->km", sol.drift(all_nodes), grad_u)
    F, d = len(phis), sol.dim
    K1 = t_max + 1
    Q, D, L = np.zeros((K1, F)), np.zeros((K1, F)), np.zeros((K1, F))
    S, H = np.zeros((K1, F, d)), np.zeros((K1, F, d, d))
    start = 0
    for j, (phi, box, m, k) in enumerate(zip(phis, boxes, sizes, keep)):
        sl = slice(start, start + m)
        start += m
        x, w = box.nodes[k], box.weights[k]
        wphi = w * phi.value(x)
        Uj = U[:, sl]
        Q[:, j] = Uj @ wphi
        if gradient:
            D[:, j] = drift_dot[:, sl] @ wphi
        S[:, j] = Uj @ (w[:, None] * phi.gradient(x))
        hess = w[:, None, None] * phi.hessian(x)
        H[:, j] = np.einsum("km,mij->kij", Uj, hess)
        L[:, j] = np.trace(H[:, j], axis1=-2, axis2=-1)
    return PairingTerms(Q, D, S, L, H, incs, sol.grid.dt)


def pairing(sol, phi: TestFunction, t_index, sample_index, box: QuadratureBox = None):
    """int u(t_k, x) phi(x) dx on one sample."""
    from .transport import pull_back

    box = phi.support_box() if box is None else box
    _check_box(phi, box)
    vals, _, _ = pull_back(sol, t_index, box.nodes, [sample_index])
    return float(vals[0] @ (box.weights * phi.value(box.nodes)))


def ito_residual(sol, phi, t_index, sample_index, box=None):
    terms = pairing_terms(sol, [phi], sample_index, t_index, None if box is None else [box])
    return float(terms.ito_residual()[-1, 0])


def stratonovich_residual(sol, phi, t_index, sample_index, box=None):
    terms = pairing_terms(sol, [phi], sample_index, t_index, None if box is None else [box])
    return float(terms.stratonovich_residual()[-1, 0])


# ------------------------------------------------------------ ensembles


@dataclass(frozen=True)
class PairingSeries:
    times: np.ndarray
    values: np.ndarray
    predicted_qv_increments: np.ndarray
    sample_index: int
    label: str = "phi"
    dt: float = field(default=0.0)


def pairing_series(sol, phi, sample_index, box=None, nodes=32) -> PairingSeries:
    terms = pairing_terms(sol, [phi], sample_index, None, None if box is None else [box], nodes)
    return PairingSeries(sol.grid.times, terms.Q[:, 0], terms.predicted_qv_increments()[:, 0],
                         int(sample_index), phi.label, sol.grid.dt)


@dataclass(frozen=True)
class SemimartingaleReport:
    qv_ratio: float
    qv_ratio_halfwidth: float
    realized_qv: float
    predicted_qv: float
    max_jump_ratio: float
    n_samples: int


def semimartingale_check(series: Sequence[PairingSeries], min_samples=64) -> SemimartingaleReport:
    """Realised against predicted quadratic variation, and the largest jump in units of sqrt(dt)."""
    if len(series) < min_samples:
        raise ConfigError(f"need at least {min_samples} series, got {len(series)}")
    realized = np.array([np.sum(np.diff(s.values) ** 2) for s in series])
    predicted = np.array([np.sum(s.predicted_qv_increments) for s in series])
    jumps = np.array([np.max(np.abs(np.diff(s.values))) / math.sqrt(s.dt) for s in series])
    r_mean, p_mean = realized.mean(), predicted.mean()
    if p_mean == 0.0:
        ratio = 0.0 if r_mean == 0.0 else math.inf
        hw = 0.0
    else:
        ratio = r_mean / p_mean
        # delta method for a ratio of means
        n = len(series)
        resid = realized - ratio * predicted
        hw = 1.96 * resid.std(ddof=1) / (math.sqrt(n) * p_mean)
    return SemimartingaleReport(float(ratio), float(hw), float(r_mean), float(p_mean), float(jumps.max()),
                                len(series))


@dataclass(frozen=True)
class ResidualLadder:
    """|R(T)| and compensator defects per (level, sample, test function)."""

    levels: np.ndarray
    dts: np.ndarray
    ito: np.ndarray  # (levels, samples, F) signed R(T)
    stratonovich: np.ndarray
    defect: np.ndarray  # discrete-compensator defect at T
    defect_dt: np.ndarray  # defect with the dt compensator
    labels: tuple

    def mean_abs(self, which="ito", functions=None):
        a = np.abs(getattr(self, which))
        if functions is not None:
            a = a[..., list(functions)]
        return a.mean(axis=(1, 2))


def residual_ladder(sol: TransportSolution, phis, levels=(0, 1, 2), n_samples=32, nodes=48, workers=1,
                    sample_offset=0) -> ResidualLadder:
    """Residuals at T on bridge-coupled refinements of the same paths."""
    levels = [int(v) for v in levels]

    def block(a, b):
        rows = []
        for i in range(sample_offset + a, sample_offset + b):
            per_level = []
            for lv in levels:
                t = pairing_terms(sol.with_level(lv), phis, i, nodes=nodes)
                per_level.append([t.ito_residual()[-1], t.stratonovich_residual()[-1],
                                  t.compensator_defect(True)[-1], t.compensator_defect(False)[-1]])
            rows.append(per_level)
        return np.array(rows)  # (B, levels, 4, F)

    res = map_blocks(block, n_samples, workers, block=1)
    res = np.moveaxis(res, 0, 1)  # (levels, samples, 4, F)
    dts = np.array([sol.with_level(lv).grid.dt for lv in levels])
    return ResidualLadder(np.array(levels), dts, res[:, :, 0], res[:, :, 1], res[:, :, 2], res[:, :, 3],
                          tuple(p.label for p in phis))


def fit_order(dts, values, per_sample=None, n_boot=2000, seed=0):
    """Least-squares slope of log|.| against log dt, with a bootstrap standard error.

    ``per_sample`` (levels, samples) lets the bootstrap resample paths jointly
    across levels, which keeps the coupling between levels.
    """
    x = np.log2(np.asarray(dts, dtype=float))
    y = np.log2(np.asarray(values, dtype=float))
    slope = float(np.polyfit(x, y, 1)[0])
    if per_sample is None:
        return slope, float("nan")
    per_sample = np.asarray(per_sample, dtype=float)
    rng = np.random.default_rng(seed)
    n = per_sample.shape[1]
    boots = np.empty(n_boot)
    for b in range(n_boot):
        idx = rng.integers(0, n, n)
        m = per_sample[:, idx].mean(axis=1)
        boots[b] = np.polyfit(x, np.log2(m), 1)[0]
    return slope, float(boots.std(ddof=1))


def summarize(values):
    return mean_and_halfwidth(np.asarray(values, dtype=float))
