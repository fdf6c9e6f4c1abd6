"""Acceptance criteria 1-10 at their stated tolerances.

Each test prints one ``[criterion N] PASS|FAIL ...`` line; the lines are
also repeated in the pytest terminal summary.  Run standalone with
``python3 tests/test_acceptance.py``.
"""
import time

import numpy as np
import pytest

from rkgeo import cli
from rkgeo.bvp import ShootingProblem, continue_eps, shoot
from rkgeo.control import (build_frame, drift_flow, energy_bound_check, integrate_control, random_signal,
                           reach)
from rkgeo.errors import AccuracyError
from rkgeo.finsler import (LAMBDA_TOL, eval_F, finsler_values, kropina_branch, lightlike_root,
                           randers_branch)
from rkgeo.fixtures import (POLAR_P0, flat_family, polar_manifold, random_lightlike_states, random_tangents,
                            varying_wind_manifold)
from rkgeo.geodesics import (convexity_certificate, fermat_lift, integrate_geodesic, pregeodesic_residual,
                             project)
from rkgeo.manifold import CATALOG_NAMES, TangentSample, catalog
from rkgeo.spacetime import SpacetimeState

REPORT = []


def report(n, ok, detail):
    line = f"[criterion {n:>2}] {'PASS' if ok else 'FAIL'}  {detail}"
    REPORT.append(line)
    print(line)
    return ok


# shared continuation traces, reused by criterion 7
_TRACES = {}


def _trace(key, M, x0, x1, hint=None):
    if key not in _TRACES:
        _TRACES[key] = continue_eps(ShootingProblem(M, x0, x1, 0.1, hint))
    return _TRACES[key]


def test_criterion_01_metric_formula_equivalence():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst, worst_branch, n = 0.0, 0.0, 0
    per = 10_000 // len(CATALOG_NAMES)
    for name in CATALOG_NAMES:
        M = catalog(name)
        xs, vs = random_tangents(M, per, rng)
        for x, v in zip(xs, vs):
            s = TangentSample(x, v)
            F = eval_F(M, s).value
            tau = lightlike_root(M, s)
            worst = max(worst, abs(F - tau) / tau)
            lam = float(M.fields(x).lam)
            if lam > LAMBDA_TOL:
                other = randers_branch(M, s)
            else:
                other = kropina_branch(M, s)
            worst_branch = max(worst_branch, abs(F - other) / abs(F))
            n += 1
    dt = time.perf_counter() - t0
    ok = worst <= 1e-12 and worst_branch <= 1e-12 and dt < 5.0 and n == 10_000
    assert report(1, ok, f"n={n} max rel |F - root| = {worst:.2e}, branches {worst_branch:.2e}, {dt:.2f} s")


def test_criterion_02_eps_monotonicity():
    rng = np.random.default_rng(2)
    bad, n = 0, 0
    per = 10_000 // len(CATALOG_NAMES)
    for name in CATALOG_NAMES:
        M = catalog(name)
        xs, vs = random_tangents(M, per, rng)
        e1 = rng.uniform(0.0, 1.0, per)
        e1 = np.where(e1 == 0.0, 1e-12, e1)
        e2 = rng.uniform(e1, 1.0)
        f0 = finsler_values(M, xs, vs, 0.0)
        for k in range(per):
            f1 = float(finsler_values(M, xs[k], vs[k], e1[k]))
            f2 = float(finsler_values(M, xs[k], vs[k], e2[k]))
            if not (f2 < f1 < f0[k]):
                bad += 1
            n += 1
    assert report(2, bad == 0 and n == 10_000, f"n={n} violations={bad}")


def test_criterion_03_conservation():
    rng = np.random.default_rng(3)
    worst_C = worst_q = 0.0
    n = 0
    for name in CATALOG_NAMES:
        M = catalog(name)
        for st in random_lightlike_states(M, 100 // len(CATALOG_NAMES), rng):
            try:
                p = integrate_geodesic(M, st, 0.0, 1.0, tol=1e-9, monitor_factor=1e6)
            except AccuracyError as exc:
                p = exc.path
            worst_C = max(worst_C, p.meta["max_drift_C"])
            worst_q = max(worst_q, p.meta["max_drift_q"])
            n += 1
    ok = n == 100 and worst_C <= 1e-7 and worst_q <= 1e-7
    assert report(3, ok, f"n={n} max drift C = {worst_C:.2e}, g_eps(v,v) = {worst_q:.2e}")


def _bvp_cases():
    cw = catalog("constant-wind-plane", w=0.5)
    vw = varying_wind_manifold()
    rng = np.random.default_rng(4)
    cases = []
    for M in (cw, vw):
        for _ in range(10):
            x1 = rng.uniform(-1.5, 1.5, 2)
            eps = float(10 ** rng.uniform(-4, -1))
            cases.append((M, np.zeros(2), x1, eps))
    return cases


def test_criterion_04_fermat_round_trip():
    worst_res = worst_unit = 0.0
    n = 0
    for M, x0, x1, eps in _bvp_cases():
        sigma = shoot(ShootingProblem(M, x0, x1, eps))
        lifted = fermat_lift(M, sigma, eps)
        worst_res = max(worst_res, pregeodesic_residual(M, lifted, eps))
        # integrate the lightlike geodesic with the lift's initial data and project
        st = SpacetimeState(lifted.x[0, :-1], 0.0, lifted.v[0, :-1], lifted.v[0, -1])
        gamma = integrate_geodesic(M, st, eps, float(sigma.s[-1] - sigma.s[0]), tol=1e-10, n_samples=201)
        back = project(gamma)
        unit = np.abs(finsler_values(M, back.x, back.v, eps) - 1.0)
        worst_unit = max(worst_unit, float(np.max(unit)))
        n += 1
    ok = n == 20 and worst_res < 1e-6 and worst_unit < 1e-6
    assert report(4, ok, f"n={n} max lift residual = {worst_res:.2e}, max |F_eps - 1| = {worst_unit:.2e}")


def test_criterion_05_zermelo_targets():
    t0 = time.perf_counter()
    cw = catalog("constant-wind-plane", w=0.5)
    kp = catalog("constant-wind-plane", w=1.0)
    down = _trace("w05-down", cw, (0.0, 0.0), (1.0, 0.0))
    up = _trace("w05-up", cw, (0.0, 0.0), (-1.0, 0.0))
    crit = _trace("w1-down", kp, (0.0, 0.0), (1.0, 0.0))
    crit_up = _trace("w1-up", kp, (0.0, 0.0), (-1.0, 0.0))
    dt = time.perf_counter() - t0
    e_down = abs(down.limit_length - 2 / 3) if down.converged else np.inf
    e_up = abs(up.limit_length - 2.0) if up.converged else np.inf
    e_crit = abs(crit.limit_length - 0.5) if crit.converged else np.inf
    ok = e_down <= 1e-5 and e_up <= 1e-5 and e_crit <= 1e-5 and crit_up.diverged and dt < 30.0
    assert report(5, ok, f"|T-2/3| = {e_down:.1e}, |T-2| = {e_up:.1e}, |L-1/2| = {e_crit:.1e}, "
                         f"upwind: {crit_up.reason}, {dt:.1f} s")


def test_criterion_06_cylinder_multiplicity():
    M = catalog("flat-cylinder-wind", w=0.5)
    found = []
    for k in range(-3, 4):
        tr = _trace(f"cyl{k}", M, (0.0, 0.0), (np.pi, 0.0), (k,))
        if tr.converged and tr.eps_sequence[-1] <= 1e-6:
            found.append((k, tr.limit_length))
    found.sort(key=lambda e: e[1])
    err = max(abs(L - abs(np.pi + 2 * np.pi * k) / (1.5 if k >= 0 else 0.5)) for k, L in found)
    lengths = [L for _, L in found]
    nondecreasing = all(b >= a - 1e-9 for a, b in zip(lengths, lengths[1:]))
    # strict growth inside each wind direction; k = 1 and k = -1 tie exactly at 2 pi
    fams = [[L for k, L in found if k >= 0], [L for k, L in found if k < 0]]
    strict = all(all(b > a for a, b in zip(f, f[1:])) for f in fams)
    distinct = len({round(L, 6) for L in lengths})
    ok = len(found) >= 5 and distinct >= 5 and nondecreasing and strict and err <= 1e-4
    assert report(6, ok, f"{len(found)} geodesics, {distinct} distinct lengths, max formula error {err:.1e}, "
                         f"windings {[k for k, _ in found]}")


def test_criterion_07_length_convergence():
    if not _TRACES:
        test_criterion_05_zermelo_targets()
        test_criterion_06_cylinder_multiplicity()
    ok_traces = [t for t in _TRACES.values() if t.converged]
    bad = []
    for key, t in _TRACES.items():
        if not t.converged:
            continue
        mono = all(b >= a - 1e-12 * max(1.0, a) for a, b in zip(t.lengths, t.lengths[1:]))
        cauchy = t.increments and max(t.increments[-1]) < 1e-5
        capped = max(t.energies) <= 1e3
        if not (mono and cauchy and capped):
            bad.append(key)
    assert report(7, len(ok_traces) >= 8 and not bad,
                  f"{len(ok_traces)} converged traces checked, failing: {bad or 'none'}")


def test_criterion_08_convexity_certificate():
    grid = [0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0]
    delta, rep = convexity_certificate(polar_manifold(), POLAR_P0, [0.0, 0.5, 1.0], grid, margin=0.1)
    delta_f, _ = convexity_certificate(flat_family(), (0.0, 0.0, 0.0), [0.0, 0.5, 1.0], grid)
    ok = delta is not None and delta > 0 and delta_f == max(grid)
    assert report(8, ok, f"polar delta = {delta}, flat delta = {delta_f} (grid max {max(grid)})")


def test_criterion_09_control_admissibility_and_reach():
    frame = build_frame(catalog("heisenberg"))
    rng = np.random.default_rng(9)
    sign_bad = bound_bad = 0
    for _ in range(100):
        u = random_signal(frame, rng)
        p = integrate_control(frame, [0.0, 0.0, 0.0], u)
        moving = np.linalg.norm(p.v, axis=1) > 0
        if not np.all(p.diagnostics["omega_v"][moving] < 0):
            sign_bad += 1
        if not energy_bound_check(frame, u, p)["passed"]:
            bound_bad += 1
    x0 = np.zeros(3)
    r_drift = reach(frame, x0, drift_flow(frame, x0), tol=1e-4)
    r_vert = reach(frame, x0, np.array([0.0, 0.0, 0.05]), tol=1e-4)
    ok = sign_bad == 0 and bound_bad == 0 and r_drift.distance <= 1e-4 and r_vert.distance <= 1e-4
    assert report(9, ok, f"sign violations {sign_bad}, bound violations {bound_bad}, "
                         f"reach drift {r_drift.distance:.1e}, vertical {r_vert.distance:.1e}")


def _tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_10_determinism(tmp_path):
    cfg = tmp_path / "connect.yaml"
    cfg.write_text("manifold:\n  catalog: flat-cylinder-wind\nx0: [0, 0]\nx1: [1.0, 0.5]\n")
    runs = []
    for i in range(2):
        out_v, out_c = tmp_path / f"verify{i}", tmp_path / f"connect{i}"
        rv = cli.main(["verify", "--seed", "7", "--out", str(out_v)])
        rc = cli.main(["connect", "--config", str(cfg), "--seed", "7", "--k-max", "1", "--out", str(out_c)])
        runs.append((rv, rc, _tree_bytes(out_v), _tree_bytes(out_c)))
    (a_v, a_c, va, ca), (b_v, b_c, vb, cb) = runs
    ok = a_v == b_v == 0 and a_c == b_c == 0 and va == vb and ca == cb and len(ca) > 1
    assert report(10, ok, f"verify files {len(va)} identical={va == vb}, connect files {len(ca)} "
                          f"identical={ca == cb}, exit codes {a_v},{a_c}")


if __name__ == "__main__":  # pragma: no cover
    import sys
    sys.exit(pytest.main([__file__, "-q"]))
