"""Acceptance run at desk scale: d = 2, T = 1, dt ~ 1e-3 (1024 steps), 256 paths, seed 0.

Each test records one PASS/FAIL line, repeated in the terminal summary.
"""

import filecmp
import math

import numpy as np
import pytest

from conftest import record
from stochtransport._util import quasi_random_points
from stochtransport.brownian import TimeGrid, refine_to, sample_path
from stochtransport.experiments import EXPERIMENTS, load_config, run_experiment
from stochtransport.field import gaussian_datum, make_field
from stochtransport.flow import backward_flow_all_starts, default_x_panel, forward_flow, backward_flow
from stochtransport.transport import QuadratureBox, TransportSolution, estimate_norms

pytestmark = pytest.mark.acceptance

T, STEPS, N, SEED = 1.0, 1024, 256, 0
GRID = TimeGrid(T, STEPS)
U0 = gaussian_datum(0.5)


def verdict_line(report):
    return "; ".join(f"{v.name}={'ok' if v.passed else 'FAIL'}({v.value:.4g})" for v in report.verdicts)


def test_drift_free_exactness():
    x = quasi_random_points(16, 2, 2.0, seed=11)
    zero = make_field("zero")
    worst_v = worst_g = 0.0
    for i in range(4):
        p = sample_path(SEED, i, 2, GRID)
        Y, J = backward_flow_all_starts(zero, p.increments, x, GRID.dt, jacobian="variational")
        exact = x[None] - p.positions[:, None, :]
        worst_v = max(worst_v, np.max(np.abs(U0(Y) - U0(exact))))
        g = np.einsum("...ji,...j->...i", J, U0.gradient(Y))
        worst_g = max(worst_g, np.max(np.abs(g - U0.gradient(exact))))
    ok = worst_v <= 1e-12 and worst_g <= 1e-12
    record(1, "drift-free exactness", ok, f"max |u - u0(x - B_t)| = {worst_v:.3g}, gradient {worst_g:.3g} "
           f"over all {STEPS + 1} grid times (tol 1e-12)")
    assert ok


def test_volume_preservation():
    x = default_x_panel()
    out = {}
    for label in ("rotation", "shear-holder"):
        f = make_field(label)
        dets = [np.linalg.det(forward_flow(f, sample_path(SEED, i, 2, GRID), 0, STEPS, x).jacobian)
                for i in range(64)]
        out[label] = float(np.mean(np.abs(np.array(dets) - 1.0)))
    ok = all(v <= 5e-3 for v in out.values())
    record(2, "volume preservation", ok, ", ".join(f"{k} mean |det - 1| = {v:.3g}" for k, v in out.items())
           + " over 64 paths (tol 5e-3)")
    assert ok


def test_inverse_flow_roundtrip():
    x = quasi_random_points(16, 2, 1.5, seed=2)
    dts = 2.0 ** -np.arange(6, 11)
    slopes = {}
    for label in ("rotation", "strain", "cellular"):
        f = make_field(label)
        errs = []
        for lv in range(5):
            e = []
            for i in range(16):
                p = refine_to(sample_path(SEED, i, 2, TimeGrid(T, 64)), lv)
                n = p.grid.steps
                X = forward_flow(f, p, 0, n, x, jacobian=None).terminal
                Y = backward_flow(f, p, 0, n, X, jacobian=None).terminal
                e.append(np.mean(np.linalg.norm(Y - x, axis=-1)))
            errs.append(np.mean(e))
        slopes[label] = float(np.polyfit(np.log2(dts), np.log2(errs), 1)[0])
    ok = all(s >= 0.8 for s in slopes.values())
    record(3, "inverse-flow roundtrip", ok, ", ".join(f"{k} slope {v:.3f}" for k, v in slopes.items())
           + " (need >= 0.8)")
    assert ok


LP_FIELDS = ["zero", "constant", "rotation", "strain", "cellular", "shear-holder"]


def test_lp_conservation():
    box = QuadratureBox(5.0, 64)
    worst, lines = {}, []
    ok = True
    for label in LP_FIELDS:
        sol = TransportSolution(U0, make_field(label), GRID, seed=SEED)
        e0 = estimate_norms(sol, 0, [1.5, 2.0, 4.0], box, N, gradient=False)["lp"]
        e1 = estimate_norms(sol, STEPS, [1.5, 2.0, 4.0], box, N, gradient=False)["lp"]
        for p in (1.5, 2.0, 4.0):
            dev = abs(e1[p].norm / e0[p].norm - 1.0)
            allowed = 0.02 + e1[p].leakage
            ok &= dev <= allowed
            worst[(label, p)] = (dev, allowed)
    label, p = max(worst, key=lambda k: worst[k][0] / worst[k][1])
    dev, allowed = worst[(label, p)]
    record(4, "L^p conservation", ok, f"worst {label} p={p:g}: |ratio - 1| = {dev:.3g} <= {allowed:.3g} "
           f"(2% + leakage), {len(worst)} cases")
    assert ok


def run(experiment, **kw):
    return run_experiment(load_config(None, experiment, seed=SEED, steps=STEPS, samples=N, **kw))


def test_persistence():
    rep = run("persistence", box_half_width=4.0, box_nodes=48)
    record(5, "persistence", rep.passed, verdict_line(rep))
    assert rep.passed


def test_regularization_by_noise():
    rep = run("noise-demo")
    record(6, "regularization by noise", rep.passed, verdict_line(rep))
    assert rep.passed


def test_uniqueness_agreement():
    rep = run("uniqueness", box_half_width=4.0, box_nodes=32)
    record(7, "uniqueness as agreement", rep.passed,
           verdict_line(rep) + f"; tol_uniq={rep.scalars['tol_uniq']:.3g}")
    assert rep.passed


def test_ic_stability():
    rep = run("ic-stability", box_half_width=4.0, box_nodes=32)
    record(8, "ic-stability identity", rep.passed, verdict_line(rep))
    assert rep.passed


def test_weak_formulation():
    rep = run("weak-residual", field="rotation", datum="bump", datum_width=2.0)
    record(9, "weak formulation", rep.passed, verdict_line(rep))
    assert rep.passed


TINY = dict(steps=16, samples=16, gradient_samples=8, flow_samples=16, box_nodes=16, box_half_width=4.0,
            demo_nodes=8, weak_base_steps=8, weak_levels=2, weak_samples=8, test_nodes=16, qv_samples=16,
            qv_steps=8, time_points=4)


def test_reproducibility(tmp_path):
    mismatched = []
    files = 0
    for exp in EXPERIMENTS:
        dirs = []
        for workers in (1, 4, 1):
            d = tmp_path / f"{exp}_{workers}_{len(dirs)}"
            cfg = load_config(None, exp, seed=SEED, workers=workers, out=str(d), **TINY)
            written = [p for p in run_experiment(cfg).write(d) if p.endswith(".csv")]
            dirs.append((d, sorted(written)))
        names = [p.rsplit("/", 1)[-1] for p in dirs[0][1]]
        files += len(names)
        for d, _ in dirs[1:]:
            _, bad, err = filecmp.cmpfiles(dirs[0][0], d, names, shallow=False)
            mismatched += bad + err
    ok = not mismatched and files > 0
    record(10, "reproducibility", ok, f"{files} series files byte-identical across workers 1, 4 and a rerun"
           + (f"; mismatched {mismatched}" if mismatched else ""))
    assert ok
