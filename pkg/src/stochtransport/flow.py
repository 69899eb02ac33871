"""Forward and backward Euler-Maruyama flows with additive noise, and their Jacobians.

The forward map steps ``X <- X + b(X) dt + dB`` through the increments in
order. The backward map marches the same increments in reverse with the sign
flipped, ``Y <- Y - b(Y) dt - dB``, so that ``Y_{s,t}`` is an approximate
inverse of ``X_{s,t}`` on the same noise.

All integrators are vectorised over arbitrary leading batch axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._util import SAMPLE_BLOCK, map_blocks, mean_and_halfwidth, quasi_random_points
from .brownian import BrownianPath, TimeGrid, sample_increments
from .errors import ConfigError, NumericsError
from .field.catalog import VectorField

FORWARD = 1.0
BACKWARD = -1.0
_EPS_SQRT = math.sqrt(np.finfo(float).eps)


def bump_step(x):
    """Finite-difference displacement sqrt(eps) * (1 + |x|)."""
    return _EPS_SQRT * (1.0 + np.linalg.norm(x, axis=-1))


def default_jacobian_method(field: VectorField):
    if field.jacobian is not None and (field.holder_exponent >= 1.0 or field.regular_jacobian):
        return "variational"
    return "bump"


def _resolve_method(field, method):
    if method in (None, False):
        return None
    if method == "auto":
        return default_jacobian_method(field)
    if method == "variational":
        if field.jacobian is None:
            raise ConfigError(f"field {field.label!r} has no Jacobian; use method='bump'")
        return method
    if method == "bump":
        return method
    raise ConfigError(f"unknown Jacobian method {method!r}")


def _small_matmul(A, B):
    """Batched A @ B; written out for 2 x 2, where it beats np.matmul."""
    if A.shape[-1] != 2:
        return np.matmul(A, B)
    out = np.empty(np.broadcast_shapes(A.shape, B.shape))
    a00, a01, a10, a11 = A[..., 0, 0], A[..., 0, 1], A[..., 1, 0], A[..., 1, 1]
    b00, b01, b10, b11 = B[..., 0, 0], B[..., 0, 1], B[..., 1, 0], B[..., 1, 1]
    out[..., 0, 0] = a00 * b00 + a01 * b10
    out[..., 0, 1] = a00 * b01 + a01 * b11
    out[..., 1, 0] = a10 * b00 + a11 * b10
    out[..., 1, 1] = a10 * b01 + a11 * b11
    return out


class _State:
    """Current points plus whatever is needed to produce their Jacobians."""

    def __init__(self, field, x, method):
        self.field = field
        self.method = method
        d = x.shape[-1]
        self.d = d
        if method == "bump":
            h = bump_step(x)
            offs = np.concatenate([np.eye(d), -np.eye(d)])  # (2d, d)
            pert = x[..., None, :] + h[..., None, None] * offs
            self.h = h
            self.X = np.concatenate([x[..., None, :], pert], axis=-2)  # (..., 2d+1, d)
        else:
            self.X = x.copy()
        self.J = None
        if method == "variational":
            self.J = np.broadcast_to(np.eye(d), x.shape + (d,)).copy()

    def step(self, inc, dt, sign, index, live=None):
        """Advance one Euler step; ``live`` restricts the update to rows [live] of axis 0."""
        sl = slice(None) if live is None else live
        X = self.X[sl]
        b = self.field.evaluator(X)
        if self.method == "variational" and self.field.depends_on != ():
            # fields that read no coordinate have Db = 0 and leave J untouched
            J = self.J[sl]
            self.J[sl] = J + (sign * dt) * _small_matmul(self.field.jacobian(X), J)
        if self.method == "bump":
            inc = np.asarray(inc)[..., None, :]
        X = X + sign * (b * dt + inc)
        if not np.isfinite(X).all():
            raise NumericsError(f"non-finite state after step {index}", where=index)
        if live is None:
            self.X = X
        else:
            self.X[sl] = X

    def points_of(self, sl):
        return self.X[sl][..., 0, :] if self.method == "bump" else self.X[sl]

    def jacobian_of(self, sl):
        if self.method == "bump":
            d = self.d
            X = self.X[sl]
            diff = X[..., 1:d + 1, :] - X[..., d + 1:, :]  # (..., column, row)
            h = self.h if np.ndim(self.h) == 0 else self.h[sl]
            return np.swapaxes(diff, -1, -2) / (2.0 * np.asarray(h)[..., None, None])
        return self.J[sl]

    @property
    def points(self):
        return self.points_of(slice(None))

    @property
    def jacobian(self):
        return self.jacobian_of(slice(None)) if self.method else None


def march(field: VectorField, incs, x, dt, sign=FORWARD, jacobian=None, on_step=None, first_index=0):
    """Euler-Maruyama march consuming ``incs[0], incs[1], ...`` in that order.

    ``x`` has shape ``(..., d)`` and every ``incs[i]`` must broadcast against
    it. ``on_step(k, points, state)`` is called after the k-th step (1-based).
    Returns ``(points, jacobian_or_None)``.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != field.dim:
        raise ConfigError(f"expected points of dimension {field.dim}, got shape {x.shape}")
    state = _State(field, x, _resolve_method(field, jacobian))
    for k in range(len(incs)):
        # step indices are reported on the path grid
        idx = first_index + k if sign > 0 else first_index - k
        state.step(incs[k], dt, sign, idx)
        if on_step is not None:
            on_step(k + 1, state.points, state)
    return state.points, state.jacobian


@dataclass(frozen=True)
class FlowResult:
    terminal: np.ndarray
    jacobian: Optional[np.ndarray]
    trajectory: Optional[np.ndarray]
    consumed_noise_checksum: int
    s_index: int
    t_index: int


def _check_indices(path, s, t):
    n = path.grid.steps
    if not (0 <= s <= t <= n):
        raise ConfigError(f"need 0 <= s <= t <= {n}, got s={s}, t={t}")


def _flow(field, path, s, t, x, sign, store_trajectory, jacobian):
    _check_indices(path, s, t)
    incs = path.increments[s:t]
    if sign < 0:
        incs = incs[::-1]
    x = np.asarray(x, dtype=float)
    traj = [x.copy()] if store_trajectory else None

    def rec(k, pts, state):
        traj.append(pts.copy())

    first = s if sign > 0 else t - 1
    pts, jac = march(field, incs, x, path.grid.dt, sign, jacobian,
                     rec if store_trajectory else None, first)
    trajectory = None
    if store_trajectory:
        trajectory = np.stack(traj)
        if sign < 0:
            trajectory = trajectory[::-1]  # index j <-> grid time s + j
    return FlowResult(pts, jac, trajectory, path.noise_checksum(s, t), s, t)


def forward_flow(field, path: BrownianPath, s_index, t_index, x, store_trajectory=False, jacobian="auto"):
    """X_{s,t}(x) on the path grid; ``jacobian`` is 'auto', 'variational', 'bump' or None."""
    return _flow(field, path, s_index, t_index, x, FORWARD, store_trajectory, jacobian)


def backward_flow(field, path: BrownianPath, s_index, t_index, x, store_trajectory=False, jacobian="auto"):
    """Y_{s,t}(x): march from t back to s with drift -b and reversed increments."""
    return _flow(field, path, s_index, t_index, x, BACKWARD, store_trajectory, jacobian)


def jacobian_flow(field, path, s_index, t_index, x, method=None, direction="forward"):
    method = default_jacobian_method(field) if method is None else method
    if method not in ("variational", "bump"):
        raise ConfigError(f"unknown Jacobian method {method!r}")
    fn = {"forward": forward_flow, "backward": backward_flow}.get(direction)
    if fn is None:
        raise ConfigError(f"direction must be 'forward' or 'backward', got {direction!r}")
    return fn(field, path, s_index, t_index, x, jacobian=method).jacobian


def cofactor_inverse(J):
    """Transposed cofactor matrix adj(J) = det(J) J^{-1}, valid for singular J too."""
    J = np.asarray(J, dtype=float)
    d = J.shape[-1]
    if J.shape[-2] != d:
        raise ConfigError(f"square matrices required, got shape {J.shape}")
    if d == 1:
        return np.ones_like(J)
    if d == 2:
        out = np.empty_like(J)
        out[..., 0, 0] = J[..., 1, 1]
        out[..., 1, 1] = J[..., 0, 0]
        out[..., 0, 1] = -J[..., 0, 1]
        out[..., 1, 0] = -J[..., 1, 0]
        return out
    cof = np.empty_like(J)
    idx = np.arange(d)
    for i in range(d):
        for j in range(d):
            minor = J[..., idx != i, :][..., :, idx != j]
            cof[..., i, j] = (-1) ** (i + j) * np.linalg.det(minor)
    return np.swapaxes(cof, -1, -2)


def spectral_norm(A):
    """Largest singular value over the trailing two axes."""
    A = np.asarray(A, dtype=float)
    if A.shape[-2:] == (2, 2):
        fro2 = np.sum(A * A, axis=(-1, -2))
        det = A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
        disc = np.sqrt(np.maximum(fro2 * fro2 - 4.0 * det * det, 0.0))
        return np.sqrt(0.5 * (fro2 + disc))
    return np.linalg.norm(A, ord=2, axis=(-2, -1))


def invert_forward_flow(field, path, s_index, t_index, x, tol=1e-12, max_iter=30):
    """Solve X_{s,t}(z) = x by Newton iteration (debug cross-check for backward_flow)."""
    x = np.asarray(x, dtype=float)
    z = backward_flow(field, path, s_index, t_index, x, jacobian=None).terminal
    for _ in range(max_iter):
        res = forward_flow(field, path, s_index, t_index, z)
        r = res.terminal - x
        if np.max(np.abs(r)) <= tol * (1.0 + np.max(np.abs(x))):
            return z
        z = z - np.linalg.solve(res.jacobian, r[..., None])[..., 0]
    raise NumericsError("Newton inversion of the forward flow did not converge")


def backward_flow_all_starts(field, incs, x, dt, jacobian=None):
    """Y_{0,t_k}(x) for every k = 0..n in one sweep.

    ``incs`` has shape ``(n, d)`` (one path). Chain k starts at x at time t_k
    and is carried back to time 0; at sweep step i (consuming increment i)
    all chains started at k > i advance together. Cost O(n^2) evaluations,
    but with vectorised batches of shrinking size. Returns points of shape
    ``(n + 1, ..., d)`` and Jacobians ``(n + 1, ..., d, d)`` if requested.
    """
    n = incs.shape[0]
    x = np.asarray(x, dtype=float)
    method = _resolve_method(field, jacobian)
    start = np.broadcast_to(x, (n + 1,) + x.shape).copy()
    state = _State(field, start, method)
    for i in range(n - 1, -1, -1):
        # chains i+1..n are live; chain i starts at x on time t_i
        state.step(incs[i], dt, BACKWARD, i, slice(i + 1, None))
    return state.points, state.jacobian


# ------------------------------------------------------------ est statistics


def default_x_panel(d=2):
    """Nine scrambled-Halton points in [-2, 2]^d plus far points |x| = 10, 100 on the diagonal.

    Quasi-random points avoid sitting exactly on coordinate lines, where the
    rough catalog drifts are singular and the Euler map is not differentiable.
    """
    pts = quasi_random_points(9, d, 2.0, seed=0)
    diag = np.ones(d) / math.sqrt(d)
    return np.vstack([pts, 10.0 * diag, 100.0 * diag])


def default_s_panel(n):
    return np.array([0, n // 4, n // 2, 3 * n // 4])


@dataclass(frozen=True)
class FlowStats:
    """Sup over the (s, x) panels of Monte Carlo means of pathwise sup-over-t quantities.

    ``est1[j]`` ~ E sup_t |D phi^j - D phi|^p, ``est2[j]`` ~ E sup_t
    |(phi^j - phi)/(1+|x|)|^p, ``est3[j]`` ~ E sup_t |D phi^j|^p, each
    maximised over the panels; ``*_halfwidth`` is the 95% CI half-width at
    the maximising panel point. ``est3_limit`` is the same for the limit drift.
    """

    est1: np.ndarray
    est2: np.ndarray
    est3: np.ndarray
    est3_limit: float
    est1_halfwidth: np.ndarray
    est2_halfwidth: np.ndarray
    est3_halfwidth: np.ndarray
    est3_limit_halfwidth: float
    n_samples: int
    p: float
    x_panel: np.ndarray
    s_panel: np.ndarray
    grid: TimeGrid
    seed: int


def _sup_of_means(per_sample):
    """per_sample: (N, ..., S, P) -> sup over (S, P) of means and the CI there."""
    mean, hw = mean_and_halfwidth(per_sample)
    if mean.size == 0:
        return np.zeros(mean.shape[:-2]), np.zeros(mean.shape[:-2])
    flat_m = mean.reshape(mean.shape[:-2] + (-1,))
    flat_h = hw.reshape(hw.shape[:-2] + (-1,))
    arg = np.argmax(flat_m, axis=-1)
    return (np.take_along_axis(flat_m, arg[..., None], -1)[..., 0],
            np.take_along_axis(flat_h, arg[..., None], -1)[..., 0])


def flow_convergence_stats(fields: Sequence[VectorField], limit: VectorField, grid: TimeGrid, p=2.0,
                           n_samples=256, x_panel=None, s_panel=None, seed=0, workers=1,
                           zero_noise=False, jacobian="auto"):
    """Coupled Monte Carlo estimates of the three flow-convergence suprema.

    All drifts are integrated on the same Brownian paths (sample indices
    0..N-1 of ``seed``); the sup over t is the running max over grid times.
    """
    if n_samples < 16:
        raise ConfigError(f"need at least 16 samples, got {n_samples}")
    fields = list(fields)
    d = limit.dim
    if any(f.dim != d for f in fields):
        raise ConfigError("all drifts must share the dimension of the limit")
    xp = default_x_panel(d) if x_panel is None else np.asarray(x_panel, dtype=float)
    sp = default_s_panel(grid.steps) if s_panel is None else np.asarray(s_panel, dtype=int)
    sp = np.sort(sp)
    if sp[0] < 0 or sp[-1] >= grid.steps:
        raise ConfigError("s-panel entries must lie in [0, n)")
    weight = 1.0 + np.linalg.norm(xp, axis=-1)  # (P,)
    all_fields = fields + [limit]
    n_f = len(all_fields)

    def block(a, b):
        incs = sample_increments(seed, range(a, b), d, grid, zero_noise=zero_noise)  # (B, n, d)
        B = b - a
        # state axes: (S, B, P, d) with S the start-time axis
        x0 = np.broadcast_to(xp, (len(sp), B) + xp.shape)
        states = [_State(f, x0.copy(), _resolve_method(f, jacobian)) for f in all_fields]
        shape = (len(sp), B, xp.shape[0])
        m1 = np.zeros((n_f - 1,) + shape)
        m2 = np.zeros((n_f - 1,) + shape)
        m3 = np.zeros((n_f,) + shape)
        # at t = s the flows are the identity: |I|^p contributes to est3
        m3[:] = 1.0
        for k in range(grid.steps):
            live = int(np.searchsorted(sp, k, side="right"))  # starts with s <= k
            inc = incs[:, k][None, :, None, :]
            pts, jacs = [], []
            sl = slice(0, live)
            for st in states:
                st.step(inc, grid.dt, FORWARD, k, sl)
                pts.append(st.points_of(sl))
                jacs.append(st.jacobian_of(sl))
            ref_x, ref_j = pts[-1], jacs[-1]
            np.maximum(m3[-1, :live], spectral_norm(ref_j) ** p, out=m3[-1, :live])
            for j in range(n_f - 1):
                e1 = spectral_norm(jacs[j] - ref_j) ** p
                e2 = (np.linalg.norm(pts[j] - ref_x, axis=-1) / weight) ** p
                np.maximum(m1[j, :live], e1, out=m1[j, :live])
                np.maximum(m2[j, :live], e2, out=m2[j, :live])
                np.maximum(m3[j, :live], spectral_norm(jacs[j]) ** p, out=m3[j, :live])
        # leading axis must be the sample axis
        return tuple(np.moveaxis(m, 2, 0) for m in (m1, m2, m3))

    m1, m2, m3 = map_blocks(block, n_samples, workers, SAMPLE_BLOCK)  # (N, F, S, P)
    e1, h1 = _sup_of_means(m1)
    e2, h2 = _sup_of_means(m2)
    e3, h3 = _sup_of_means(m3)
    return FlowStats(e1, e2, e3[:-1], float(e3[-1]), h1, h2, h3[:-1], float(h3[-1]),
                     n_samples, p, xp, sp, grid, seed)
