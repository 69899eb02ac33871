"""Mollification of drifts and initial data by tensor Gauss-Legendre quadrature."""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from .catalog import SMOOTH, ScalarDatum, VectorField
from .cutoff import widening_cutoff_gradient, widening_cutoff_value


@dataclass(frozen=True)
class MollifierSpec:
    epsilon: float
    nodes: int = 9

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError(f"mollifier radius must be positive, got {self.epsilon}")
        if self.nodes < 3:
            raise ConfigError(f"need at least 3 quadrature nodes per axis, got {self.nodes}")


def bump(z):
    """Unnormalised kernel exp(-1/(1-|z|^2)) on the open unit ball."""
    s = np.sum(np.asarray(z, dtype=float) ** 2, axis=-1)
    inside = s < 1.0
    return np.where(inside, np.exp(-1.0 / np.where(inside, 1.0 - s, 1.0)), 0.0)


@functools.lru_cache(maxsize=None)
def _tensor_rule(d, m):
    x, w = np.polynomial.legendre.leggauss(m)
    grids = np.meshgrid(*([x] * d), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.ones(nodes.shape[0])
    for wg in np.meshgrid(*([w] * d), indexing="ij"):
        weights = weights * wg.ravel()
    return nodes, weights


def bump_gradient(z):
    z = np.asarray(z, dtype=float)
    s = np.sum(z * z, axis=-1)
    inside = s < 1.0
    q = np.where(inside, 1.0 - s, 1.0)
    return (bump(z) * np.where(inside, -2.0 / q**2, 0.0))[..., None] * z


@functools.lru_cache(maxsize=None)
def kernel_gradient_stencil(d, m):
    """Weights G (K, d) with sum_k f(z_k) G_k ~ int f grad(rho), on the stencil nodes.

    Normalised so that sum_k z_kj G_kj = -1 exactly, which makes derivatives
    of linear fields exact.
    """
    nodes, _, _ = kernel_stencil(d, m)
    full, w = _tensor_rule(d, m)
    keep = w * bump(full) > 0
    g = w[keep, None] * bump_gradient(full[keep])
    scale = -1.0 / np.sum(nodes * g, axis=0)
    return g * scale


@functools.lru_cache(maxsize=None)
def kernel_stencil(d, m):
    """Nodes (in unit-ball coordinates) and weights summing to one.

    The kernel is normalised against this same rule, so the discrete mass is 1
    up to rounding and symmetric nodes cancel odd moments exactly.
    """
    nodes, w = _tensor_rule(d, m)
    k = w * bump(nodes)
    keep = k > 0
    norm = k[keep].sum()
    return nodes[keep], k[keep] / norm, 1.0 / (w * bump(nodes)).sum()


def mollifier_density(spec: MollifierSpec, x):
    """rho_eps(x) = c bump(x/eps) / eps^d, with c from the discrete normalisation."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    c = kernel_stencil(d, spec.nodes)[2]
    return c * bump(x / spec.epsilon) / spec.epsilon**d


def _shifts(d, spec, depends_on):
    """Shifts eps z_k with value weights (K,) and kernel-gradient weights (K, d)."""
    nodes, weights, _ = kernel_stencil(d, spec.nodes)
    grad_w = kernel_gradient_stencil(d, spec.nodes)
    if depends_on is None or len(depends_on) == d:
        return spec.epsilon * nodes, weights, grad_w
    # the integrand ignores some axes: merge nodes with equal relevant coordinates
    mask = np.zeros(d, dtype=bool)
    mask[list(depends_on)] = True
    merged, merged_g = {}, {}
    for z, w, g in zip(nodes, weights, grad_w):
        key = tuple(np.where(mask, z, 0.0))
        merged[key] = merged.get(key, 0.0) + w
        merged_g[key] = merged_g.get(key, 0.0) + g
    keys = list(merged)
    shifts = spec.epsilon * np.array(keys, dtype=float).reshape(len(keys), d)
    return shifts, np.array([merged[k] for k in keys]), np.array([merged_g[k] for k in keys]).reshape(len(keys), d)


def mollify_field(field: VectorField, spec: MollifierSpec) -> VectorField:
    """b_eps = b * rho_eps evaluated as sum_k w_k b(x - eps z_k).

    For Lipschitz bases the Jacobian is the same quadrature applied to Db.
    For Hoelder bases (theta < 1) Db is not integrable against point
    evaluations, so the derivative is moved onto the kernel,
    D b_eps = (1/eps) int b(x - eps z) grad rho(z) dz, which is bounded.
    """
    shifts, weights, grad_w = _shifts(field.dim, spec, field.depends_on)
    base = field.evaluator
    eps = spec.epsilon

    def ev(x):
        out = np.zeros(x.shape)
        for z, w in zip(shifts, weights):
            out += w * base(x - z)
        return out

    jac = None
    regular = field.regular_jacobian
    if field.holder_exponent < 1.0:
        regular = True

        def jac(x):
            out = np.zeros(x.shape + (field.dim,))
            for z, g in zip(shifts, grad_w):
                out += base(x - z)[..., :, None] * (g / eps)
            return out

    elif field.jacobian is not None:
        base_jac = field.jacobian

        def jac(x):
            out = np.zeros(x.shape + (field.dim,))
            for z, w in zip(shifts, weights):
                out += w * base_jac(x - z)
            return out

    singular = None
    if field.singular_distance is not None:
        base_sing = field.singular_distance

        def singular(x):
            # kinks of the discrete evaluator; the Jacobian itself is bounded
            x = np.asarray(x, dtype=float)
            return np.min([base_sing(x - z) for z in shifts], axis=0)

    return VectorField(
        field.dim,
        ev,
        holder_exponent=field.holder_exponent,
        divergence_free=field.divergence_free,
        jacobian=jac,
        label=f"{field.label}*rho[{spec.epsilon:g}]",
        depends_on=field.depends_on,
        singular_distance=singular,
        regular_jacobian=regular,
    )


def mollify_datum(u0: ScalarDatum, spec: MollifierSpec) -> ScalarDatum:
    """u0_eps(x) = eta(eps x) * (u0 * rho_eps)(x), gradient by the product rule."""
    d = u0.dim
    shifts, weights, _ = _shifts(d, spec, None)
    eps = spec.epsilon

    def conv(fn, x, shape):
        out = np.zeros(shape)
        for z, w in zip(shifts, weights):
            out += w * fn(x - z)
        return out

    def value(x):
        return widening_cutoff_value(eps, x) * conv(u0.value, x, x.shape[:-1])

    def gradient(x):
        smooth = conv(u0.value, x, x.shape[:-1])
        grad = conv(u0.gradient, x, x.shape)
        return widening_cutoff_gradient(eps, x) * smooth[..., None] + widening_cutoff_value(eps, x)[..., None] * grad

    support = min(2.0 / eps, u0.support_radius + eps)
    extent = None if u0.extent is None else u0.extent + eps
    return ScalarDatum(d, value, gradient, support, SMOOTH, f"{u0.label}*rho[{eps:g}]", extent)
