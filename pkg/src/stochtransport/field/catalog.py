"""Drift fields and initial data used as the fixed test bed.

Every evaluator is vectorised: it accepts an array of shape ``(..., d)`` and
returns ``(..., d)`` for fields, ``(...)`` for scalar values, ``(..., d)`` for
gradients and ``(..., d, d)`` for Jacobians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..errors import ConfigError, NumericsError

Evaluator = Callable[[np.ndarray], np.ndarray]

SMOOTH = "compactly-smooth"
SOBOLEV = "sobolev-only"


@dataclass(frozen=True)
class VectorField:
    """An autonomous drift b: R^d -> R^d.

    ``depends_on`` lists the coordinates the evaluator actually reads (``None``
    means all of them); mollification uses it to merge quadrature nodes that
    only differ along ignored axes. ``singular_distance`` returns the distance
    to the set where ``jacobian`` is undefined. ``regular_jacobian`` marks a
    Jacobian that is bounded and continuous even though ``holder_exponent``
    describes a rough evaluator (mollified Hoelder fields).
    """

    dim: int
    evaluator: Evaluator
    holder_exponent: float = 1.0
    divergence_free: bool = False
    jacobian: Optional[Evaluator] = None
    label: str = "field"
    depends_on: Optional[tuple] = None
    singular_distance: Optional[Callable[[np.ndarray], np.ndarray]] = None
    regular_jacobian: bool = False

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError(f"dimension must be positive, got {self.dim}")
        if not 0.0 < self.holder_exponent <= 1.0:
            raise ConfigError(f"Hölder exponent must lie in (0, 1], got {self.holder_exponent}")

    def __call__(self, x):
        return self.evaluator(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class ScalarDatum:
    """An initial condition u0 with its gradient."""

    dim: int
    value: Evaluator
    gradient: Evaluator
    support_radius: float = math.inf
    smoothness: str = SMOOTH
    label: str = "datum"
    # radius beyond which the datum is numerically negligible
    extent: Optional[float] = None

    def __post_init__(self):
        if self.smoothness not in (SMOOTH, SOBOLEV):
            raise ConfigError(f"unknown smoothness tag {self.smoothness!r}")

    def __call__(self, x):
        return self.value(np.asarray(x, dtype=float))

    @property
    def effective_radius(self):
        if math.isfinite(self.support_radius):
            return self.support_radius
        if self.extent is not None:
            return self.extent
        raise ConfigError(f"datum {self.label!r} has no finite extent")


def _check_point(dim, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (dim,):
        raise ConfigError(f"expected points of dimension {dim}, got shape {x.shape}")
    return x


def evaluate_field(field: VectorField, x) -> np.ndarray:
    """b(x), refusing non-finite output."""
    x = _check_point(field.dim, x)
    out = field.evaluator(x)
    if not np.all(np.isfinite(out)):
        bad = np.argwhere(~np.isfinite(out).all(axis=-1)) if out.ndim > 1 else None
        where = x if bad is None else x[tuple(bad[0])]
        raise NumericsError(f"field {field.label!r} is not finite at {where}", where=where)
    return out


def divergence_estimate(field: VectorField, x, h=1e-4):
    """Central-difference divergence sum_i (b_i(x+h e_i) - b_i(x-h e_i)) / 2h."""
    if h <= 0:
        raise ConfigError("step h must be positive")
    x = _check_point(field.dim, x)
    div = np.zeros(x.shape[:-1])
    for i in range(field.dim):
        e = np.zeros(field.dim)
        e[i] = h
        div = div + (evaluate_field(field, x + e)[..., i] - evaluate_field(field, x - e)[..., i]) / (2 * h)
    return div


# ---------------------------------------------------------------- drift fields


def zero_field(dim=2):
    return VectorField(
        dim,
        lambda x: np.zeros(x.shape),
        holder_exponent=1.0,
        divergence_free=True,
        jacobian=lambda x: np.zeros(x.shape + (x.shape[-1],)),
        label="zero",
        depends_on=(),
    )


def constant_field(value=(3.0, 0.0)):
    c = np.array(value, dtype=float)
    return VectorField(
        c.size,
        lambda x: np.broadcast_to(c, x.shape).copy(),
        divergence_free=True,
        jacobian=lambda x: np.zeros(x.shape + (c.size,)),
        label="constant",
        depends_on=(),
    )


def rotation_field(scale=1.0):
    """b(x, y) = scale * (-y, x)."""
    a = np.array([[0.0, -scale], [scale, 0.0]])

    def ev(x):
        out = np.empty(x.shape)
        out[..., 0] = -scale * x[..., 1]
        out[..., 1] = scale * x[..., 0]
        return out

    return VectorField(2, ev, divergence_free=True,
                       jacobian=lambda x: np.broadcast_to(a, x.shape[:-1] + (2, 2)),
                       label="rotation")


def strain_field(scale=1.0):
    """Hyperbolic strain b(x, y) = scale * (x, -y); unbounded and solenoidal."""
    a = np.array([[scale, 0.0], [0.0, -scale]])

    def ev(x):
        out = np.empty(x.shape)
        out[..., 0] = scale * x[..., 0]
        out[..., 1] = -scale * x[..., 1]
        return out

    return VectorField(2, ev, divergence_free=True,
                       jacobian=lambda x: np.broadcast_to(a, x.shape[:-1] + (2, 2)),
                       label="strain")


def cellular_field(scale=1.0):
    """Bounded smooth cellular flow from the stream function sin x sin y."""

    def ev(x):
        sx, cx = np.sin(x[..., 0]), np.cos(x[..., 0])
        sy, cy = np.sin(x[..., 1]), np.cos(x[..., 1])
        out = np.empty(x.shape)
        out[..., 0] = scale * sx * cy
        out[..., 1] = -scale * cx * sy
        return out

    def jac(x):
        sx, cx = np.sin(x[..., 0]), np.cos(x[..., 0])
        sy, cy = np.sin(x[..., 1]), np.cos(x[..., 1])
        out = np.empty(x.shape + (2,))
        out[..., 0, 0] = scale * cx * cy
        out[..., 0, 1] = -scale * sx * sy
        out[..., 1, 0] = scale * sx * sy
        out[..., 1, 1] = -scale * cx * cy
        return out

    return VectorField(2, ev, divergence_free=True, jacobian=jac, label="cellular")


def shear_holder_field(theta=0.5, scale=1.0):
    """b(x, y) = scale * (sign(y) |y|^theta, 0).

    Solenoidal, C^theta and, for theta < 1, not Lipschitz across y = 0. Its
    deterministic flow is (x + t b_1(y), y).
    """
    if not 0.0 < theta <= 1.0:
        raise ConfigError(f"theta must lie in (0, 1], got {theta}")

    def ev(x):
        y = x[..., 1]
        out = np.zeros(x.shape)
        out[..., 0] = scale * np.copysign(np.abs(y) ** theta, y)
        return out

    def jac(x):
        out = np.zeros(x.shape + (2,))
        with np.errstate(divide="ignore"):
            out[..., 0, 1] = scale * theta * np.abs(x[..., 1]) ** (theta - 1.0)
        return out

    singular = None if theta == 1.0 else (lambda x: np.abs(np.asarray(x)[..., 1]))
    return VectorField(2, ev, holder_exponent=theta, divergence_free=True, jacobian=jac,
                       label="shear-holder", depends_on=(1,), singular_distance=singular)


def expansion_field():
    """b(x, y) = (x, 0): the non-solenoidal negative control, div b = 1."""

    def ev(x):
        out = np.zeros(x.shape)
        out[..., 0] = x[..., 0]
        return out

    a = np.array([[1.0, 0.0], [0.0, 0.0]])
    return VectorField(2, ev, divergence_free=False,
                       jacobian=lambda x: np.broadcast_to(a, x.shape[:-1] + (2, 2)),
                       label="expansion", depends_on=(0,))


FIELD_CATALOG = {
    "zero": zero_field,
    "constant": constant_field,
    "rotation": rotation_field,
    "strain": strain_field,
    "cellular": cellular_field,
    "shear-holder": shear_holder_field,
    "expansion": expansion_field,
}


def make_field(label, **params):
    try:
        factory = FIELD_CATALOG[label]
    except KeyError:
        raise ConfigError(f"unknown field label {label!r}; known: {sorted(FIELD_CATALOG)}") from None
    return factory(**params)


# ---------------------------------------------------------------- initial data


def gaussian_datum(sigma=0.5, center=(0.0, 0.0), amplitude=1.0):
    c = np.array(center, dtype=float)
    s2 = sigma * sigma

    def value(x):
        r2 = np.sum((x - c) ** 2, axis=-1)
        return amplitude * np.exp(-0.5 * r2 / s2)

    def gradient(x):
        return -(x - c) / s2 * value(x)[..., None]

    # 1e-16 relative level
    extent = float(np.linalg.norm(c) + sigma * math.sqrt(2 * math.log(1e16)))
    return ScalarDatum(c.size, value, gradient, math.inf, SMOOTH, "gaussian", extent)


def bump_datum(radius=1.0, center=(0.0, 0.0), amplitude=1.0):
    """amplitude * exp(1 - 1/(1 - |x-c|^2/r^2)) inside the ball, 0 outside."""
    c = np.array(center, dtype=float)

    def _parts(x):
        z = x - c
        s = np.sum(z * z, axis=-1) / radius**2
        inside = s < 1.0
        safe = np.where(inside, 1.0 - s, 1.0)
        q = np.where(inside, amplitude * np.exp(1.0 - 1.0 / safe), 0.0)
        return z, safe, q

    def value(x):
        return _parts(x)[2]

    def gradient(x):
        z, safe, q = _parts(x)
        return (-2.0 / radius**2) * (q / safe**2)[..., None] * z

    support = float(np.linalg.norm(c) + radius)
    return ScalarDatum(c.size, value, gradient, support, SMOOTH, "bump")


def cone_datum(radius=1.0, center=(0.0, 0.0), amplitude=1.0):
    """Tent function amplitude * (1 - |x-c|/r)_+ : W^{1,p} but not C^1."""
    c = np.array(center, dtype=float)

    def value(x):
        r = np.linalg.norm(x - c, axis=-1)
        return amplitude * np.maximum(1.0 - r / radius, 0.0)

    def gradient(x):
        z = x - c
        r = np.linalg.norm(z, axis=-1)
        inside = (r < radius) & (r > 0)
        scale = np.where(inside, -amplitude / (radius * np.where(r > 0, r, 1.0)), 0.0)
        return scale[..., None] * z

    support = float(np.linalg.norm(c) + radius)
    return ScalarDatum(c.size, value, gradient, support, SOBOLEV, "cone")


def zero_datum(dim=2):
    return ScalarDatum(dim, lambda x: np.zeros(x.shape[:-1]), lambda x: np.zeros(x.shape),
                       0.0, SMOOTH, "zero")


def scaled_datum(datum: ScalarDatum, alpha):
    return ScalarDatum(
        datum.dim,
        lambda x: alpha * datum.value(x),
        lambda x: alpha * datum.gradient(x),
        datum.support_radius,
        datum.smoothness,
        f"{alpha}*{datum.label}",
        datum.extent,
    )


DATUM_CATALOG = {
    "gaussian": gaussian_datum,
    "bump": bump_datum,
    "cone": cone_datum,
    "zero": zero_datum,
}


def make_datum(label, **params):
    try:
        factory = DATUM_CATALOG[label]
    except KeyError:
        raise ConfigError(f"unknown datum label {label!r}; known: {sorted(DATUM_CATALOG)}") from None
    return factory(**params)
