import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from stochtransport import ConfigError, NumericsError
from stochtransport._util import quasi_random_points
from stochtransport.brownian import TimeGrid, refine_to, sample_path, zero_path
from stochtransport.field import (
    MollifierSpec,
    VectorField,
    make_field,
    mollify_field,
    rotation_field,
    shear_holder_field,
    zero_field,
)
from stochtransport.flow import (
    backward_flow,
    backward_flow_all_starts,
    bump_step,
    cofactor_inverse,
    default_jacobian_method,
    default_x_panel,
    flow_convergence_stats,
    forward_flow,
    invert_forward_flow,
    jacobian_flow,
    spectral_norm,
)

ROT = np.array([[0.0, -1.0], [1.0, 0.0]])
GRID = TimeGrid(1.0, 1024)
SMOOTH = ["zero", "constant", "rotation", "strain", "cellular"]


def test_drift_free_is_exact():
    p = sample_path(1, 0, 2, GRID)
    x = np.array([0.3, -1.2])
    f = forward_flow(zero_field(), p, 100, 900, x)
    assert np.array_equal(f.terminal, x + p.increments[100:900].sum(axis=0)) or \
        np.allclose(f.terminal, x + p.position(900) - p.position(100), rtol=0, atol=1e-13)
    assert np.array_equal(f.jacobian, np.eye(2))
    b = backward_flow(zero_field(), p, 100, 900, x)
    assert np.allclose(b.terminal, x - (p.position(900) - p.position(100)), rtol=0, atol=1e-13)
    for method in ("variational", "bump"):
        assert np.allclose(jacobian_flow(zero_field(), p, 0, 1024, x, method), np.eye(2), atol=1e-12)


def test_rotation_matches_linear_recursion():
    p = sample_path(2, 0, 2, GRID)
    x = np.array([1.0, 0.0])
    dt = GRID.dt
    t = GRID.times
    exact = expm(ROT * 1.0) @ x + sum(expm(ROT * (1.0 - t[k + 1])) @ p.increments[k] for k in range(GRID.steps))
    res = forward_flow(rotation_field(), p, 0, GRID.steps, x)
    assert np.linalg.norm(res.terminal - exact) <= 5e-3
    assert np.linalg.norm(res.jacobian - expm(ROT)) <= 5e-3
    assert abs(np.linalg.det(res.jacobian) - 1.0) <= 5e-3
    assert dt == 1 / 1024


def test_shear_zero_noise():
    theta = 0.3
    p = zero_path(2, GRID)
    x = np.array([0.0, 2.0])
    res = forward_flow(shear_holder_field(theta), p, 0, GRID.steps, x, jacobian="bump")
    assert np.allclose(res.terminal, [2.0**theta, 2.0], atol=1e-6)
    expected = np.array([[1.0, theta * 2.0 ** (theta - 1.0)], [0.0, 1.0]])
    assert np.allclose(res.jacobian, expected, atol=1e-4)


def test_rotation_zero_noise_reverse():
    grid = TimeGrid(1.0, 2**14)
    p = zero_path(2, grid)
    x = np.array([1.0, 0.5])
    y = backward_flow(rotation_field(), p, 0, grid.steps, x).terminal
    assert np.allclose(y, expm(-ROT) @ x, atol=1e-4)
    back = forward_flow(rotation_field(), p, 0, grid.steps, y).terminal
    # (I + A dt)(I - A dt) = (1 + dt^2) I for the rotation generator, so the
    # Euler roundtrip error is exactly ((1 + dt^2)^n - 1) |x|, which is O(dt)
    n, dt = grid.steps, grid.dt
    assert np.allclose(back, (1.0 + dt * dt) ** n * x, rtol=1e-12, atol=0)
    assert np.linalg.norm(back - x) <= 1.2 * dt * np.linalg.norm(x)


@pytest.mark.parametrize("label", ["rotation", "cellular", "strain"])
def test_roundtrip_order(label):
    field = make_field(label)
    base = sample_path(4, 0, 2, TimeGrid(1.0, 64))
    x = quasi_random_points(8, 2, 1.5, seed=2)
    errs = []
    for lv in range(5):
        p = refine_to(base, lv)
        n = p.grid.steps
        X = forward_flow(field, p, 0, n, x, jacobian=None).terminal
        Y = backward_flow(field, p, 0, n, X, jacobian=None).terminal
        errs.append(np.mean(np.linalg.norm(Y - x, axis=-1)))
    dts = 2.0 ** -np.arange(6, 11)
    slope = np.polyfit(np.log2(dts), np.log2(errs), 1)[0]
    assert slope >= 0.8


def test_newton_inverse_agrees():
    p = sample_path(9, 3, 2, TimeGrid(1.0, 128))
    f = make_field("cellular")
    x = np.array([[0.2, 0.4], [-1.0, 0.3]])
    z = invert_forward_flow(f, p, 0, 128, x)
    assert np.allclose(forward_flow(f, p, 0, 128, z).terminal, x, atol=1e-10)


@pytest.mark.parametrize("label", SMOOTH)
def test_method_agreement(label):
    f = make_field(label)
    p = sample_path(5, 1, 2, TimeGrid(1.0, 256))
    x = quasi_random_points(10, 2, 2.0, seed=6)
    Jv = jacobian_flow(f, p, 0, 256, x, "variational")
    Jb = jacobian_flow(f, p, 0, 256, x, "bump")
    h = np.max(bump_step(x))
    assert np.max(np.abs(Jv - Jb)) <= max(1e-4, 10 * h)


def test_default_methods():
    assert default_jacobian_method(rotation_field()) == "variational"
    assert default_jacobian_method(shear_holder_field(0.3)) == "bump"
    m = mollify_field(shear_holder_field(0.3), MollifierSpec(0.1))
    assert default_jacobian_method(m) == "variational"
    nojac = VectorField(2, lambda x: -x, label="nojac")
    p = zero_path(2, TimeGrid(1.0, 4))
    with pytest.raises(ConfigError):
        forward_flow(nojac, p, 0, 4, np.zeros(2), jacobian="variational")
    with pytest.raises(ConfigError):
        forward_flow(rotation_field(), p, 0, 4, np.zeros(2), jacobian="adjoint")


def test_index_and_dimension_errors():
    p = zero_path(2, TimeGrid(1.0, 8))
    with pytest.raises(ConfigError):
        forward_flow(rotation_field(), p, 5, 3, np.zeros(2))
    with pytest.raises(ConfigError):
        forward_flow(rotation_field(), p, 0, 9, np.zeros(2))
    with pytest.raises(ConfigError):
        forward_flow(rotation_field(), p, 0, 8, np.zeros(3))


def test_blowup_raises_numerics_error():
    explode = VectorField(2, lambda x: x**3 * 1e30, label="explode")
    p = zero_path(2, TimeGrid(1.0, 64))
    with np.errstate(over="ignore", invalid="ignore"), pytest.raises(NumericsError):
        forward_flow(explode, p, 0, 64, np.array([1e3, 1e3]), jacobian=None)


def test_trajectory_and_checksum():
    p = sample_path(6, 0, 2, TimeGrid(1.0, 32))
    r = forward_flow(rotation_field(), p, 4, 20, np.array([1.0, 1.0]), store_trajectory=True)
    assert r.trajectory.shape == (17, 2)
    assert np.array_equal(r.trajectory[-1], r.terminal)
    s = forward_flow(shear_holder_field(0.5), p, 4, 20, np.array([1.0, 1.0]))
    assert r.consumed_noise_checksum == s.consumed_noise_checksum == p.noise_checksum(4, 20)
    b = backward_flow(rotation_field(), p, 4, 20, np.array([1.0, 1.0]), store_trajectory=True)
    assert np.array_equal(b.trajectory[0], b.terminal)
    assert np.array_equal(b.trajectory[-1], [1.0, 1.0])


@pytest.mark.parametrize("label", ["rotation", "shear-holder", "cellular", "strain"])
def test_volume_preservation(label):
    f = make_field(label)
    x = default_x_panel()[:9]
    dets = []
    for i in range(64):
        J = forward_flow(f, sample_path(0, i, 2, GRID), 0, GRID.steps, x).jacobian
        dets.append(np.linalg.det(J))
    dets = np.array(dets)
    assert np.all(dets > 0)
    assert np.mean(np.abs(dets - 1.0)) <= max(5e-3, 5 * GRID.dt)


def test_all_starts_matches_individual_flows():
    f = make_field("cellular")
    p = sample_path(8, 0, 2, TimeGrid(1.0, 16))
    x = np.array([[0.3, 0.1], [-0.5, 0.9]])
    Y, J = backward_flow_all_starts(f, p.increments, x, p.grid.dt, jacobian="variational")
    for k in (0, 5, 16):
        r = backward_flow(f, p, 0, k, x, jacobian="variational")
        assert np.allclose(Y[k], r.terminal, rtol=0, atol=1e-13)
        assert np.allclose(J[k], r.jacobian, rtol=0, atol=1e-12)


def test_cofactor_cases():
    assert np.array_equal(cofactor_inverse(np.eye(2)), np.eye(2))
    a = 2.5
    assert np.array_equal(cofactor_inverse(np.array([[1.0, a], [0.0, 1.0]])), [[1.0, -a], [0.0, 1.0]])
    rng = np.random.default_rng(0)
    A = rng.standard_normal((5, 3, 3))
    C = cofactor_inverse(A)
    assert np.allclose(C @ A, np.linalg.det(A)[:, None, None] * np.eye(3), atol=1e-12)
    with pytest.raises(ConfigError):
        cofactor_inverse(np.zeros((2, 3)))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=4, max_size=4))
def test_cofactor_identity_property(entries):
    J = np.array(entries).reshape(2, 2)
    C = cofactor_inverse(J)
    scale = max(1.0, np.max(np.abs(J))) ** 2
    assert np.allclose(C @ J, np.linalg.det(J) * np.eye(2), atol=1e-12 * scale)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=4, max_size=4))
def test_spectral_norm_property(entries):
    A = np.array(entries).reshape(2, 2)
    assert math.isclose(spectral_norm(A), np.linalg.norm(A, 2), rel_tol=1e-9, abs_tol=1e-9)


def test_cofactor_on_computed_jacobians():
    p = sample_path(3, 0, 2, TimeGrid(1.0, 128))
    J = forward_flow(make_field("cellular"), p, 0, 128, quasi_random_points(20, 2, 2.0)).jacobian
    assert np.allclose(cofactor_inverse(J) @ J, np.linalg.det(J)[:, None, None] * np.eye(2), atol=1e-10)


def test_flow_stats_identical_drifts_give_zero():
    f = rotation_field()
    st_ = flow_convergence_stats([f, f], f, TimeGrid(1.0, 32), n_samples=16)
    assert np.all(st_.est1 == 0.0)
    assert np.all(st_.est2 == 0.0)
    assert np.allclose(st_.est3, st_.est3_limit)


def test_flow_stats_rotation_ladder():
    f = rotation_field()
    ladder = [mollify_field(f, MollifierSpec(2.0**-n)) for n in range(1, 4)]
    st_ = flow_convergence_stats(ladder, f, TimeGrid(1.0, 32), n_samples=16)
    assert np.all(st_.est2 <= 1e-20)


def test_flow_stats_needs_samples():
    with pytest.raises(ConfigError):
        flow_convergence_stats([], rotation_field(), TimeGrid(1.0, 8), n_samples=8)


def test_flow_stats_worker_invariance():
    f = shear_holder_field(0.3)
    ladder = [mollify_field(f, MollifierSpec(d)) for d in (0.4, 0.2)]
    a = flow_convergence_stats(ladder, f, TimeGrid(1.0, 32), n_samples=24, workers=1)
    b = flow_convergence_stats(ladder, f, TimeGrid(1.0, 32), n_samples=24, workers=3)
    for name in ("est1", "est2", "est3"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_shear_ladder_statistics_regression():
    # reduced-scale values computed once with seed 0 and frozen here
    f = shear_holder_field(0.3)
    ladder = [mollify_field(f, MollifierSpec(d)) for d in (0.4, 0.2, 0.1)]
    st_ = flow_convergence_stats(ladder, f, TimeGrid(1.0, 64), n_samples=32)
    assert np.allclose(st_.est1, [0.37343175, 0.29730855, 0.24961165], rtol=1e-6)
    assert np.allclose(st_.est2, [2.17210520e-04, 5.39737363e-05, 1.22553645e-05], rtol=1e-6)
    assert np.allclose(st_.est3, [2.86914032, 3.06921795, 3.34453494], rtol=1e-6)
    assert np.all(np.diff(st_.est1) < 0) and np.all(np.diff(st_.est2) < 0)
