import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from rkgeo.control import (ControlSignal, build_frame, drift_flow, endpoint, energy_bound_check,
                           integrate_control, random_signal, reach)
from rkgeo.errors import AdmissibilityError, NonintegrabilityError, ReachFailure
from rkgeo.manifold import build_manifold, catalog


@pytest.fixture(scope="module")
def frame():
    return build_frame(catalog("heisenberg"))


def test_heisenberg_constants(frame):
    # |omega|^2 = 1 + (x^2 + y^2)/4, largest at the box corners: 3/2.
    # On ker(omega), dω(X1, X2) = ±|ω ∧ dω| / |ω| = 1/|ω|, so lambda_pre = 1/Omega and C^2 = 30 Omega^2 = 45.
    Omega = np.sqrt(1.5)
    assert frame.Omega == pytest.approx(Omega, rel=1e-12)
    assert frame.lambda_pre == pytest.approx(1 / Omega, rel=1e-9)
    assert frame.C ** 2 == pytest.approx(45.0, rel=1e-9)
    assert frame.lam > 4 * (frame.m + 3) * frame.Omega
    assert frame.nonintegrability_min == pytest.approx(1.0)


def test_frame_is_orthonormal_kernel_basis(frame):
    M = frame.M
    pts = np.random.default_rng(0).uniform(-1, 1, (20, 3))
    X0, X = frame.fields(pts)
    f = M.fields(pts)
    on = np.sqrt(np.einsum("ki,ki->k", f.omega, f.omega))
    np.testing.assert_allclose(np.einsum("ki,ki->k", f.omega, X0), -on)
    np.testing.assert_allclose(np.einsum("ki,kji->kj", f.omega, X), 0.0, atol=1e-14)
    gram = np.einsum("kai,kbi->kab", X, X)
    np.testing.assert_allclose(gram, np.broadcast_to(np.eye(2), gram.shape), atol=1e-14)
    # single-point fast path agrees with the batched one
    x0p, xp = frame.fields(pts[3])
    np.testing.assert_allclose(x0p, X0[3])
    np.testing.assert_allclose(xp, X[3], atol=1e-14)


def test_two_dimensional_manifold_is_rejected():
    with pytest.raises(NonintegrabilityError):
        build_frame(catalog("kropina-plane"))


def test_integrable_kernel_is_rejected():
    M = build_manifold([["1", "0", "0"], ["0", "1", "0"], ["0", "0", "1"]], ["0", "0", "1"], "0",
                       bounds=[[-1, 1]] * 3)
    with pytest.raises(NonintegrabilityError):
        build_frame(M)


def test_signal_admissibility(frame):
    with pytest.raises(AdmissibilityError):
        ControlSignal([0.0, 0.5, 0.4, 1.0], [0, 0, 0], [np.zeros((1, 2))] * 3)
    bad = ControlSignal([0.0, 1.0], [0.2], [[[frame.C, frame.C]]])
    assert bad.violations(frame.C)
    with pytest.raises(AdmissibilityError):
        integrate_control(frame, [0, 0, 0], bad)
    neg = ControlSignal([0.0, 1.0], [-0.1], [[[0.0, 0.0]]])
    assert neg.violations(frame.C)


def test_signal_json_round_trip(frame):
    u = random_signal(frame, np.random.default_rng(3))
    v = ControlSignal.from_json(u.to_json())
    np.testing.assert_array_equal(v.breakpoints, u.breakpoints)
    assert all(np.array_equal(a, b) for a, b in zip(u.alpha, v.alpha))


def test_concat_reaches_composed_endpoint(frame):
    rng = np.random.default_rng(4)
    # alpha is scaled by sqrt(2) on concatenation, so start from |alpha| <= C / sqrt(2)
    u, w = (random_signal(frame, rng) for _ in range(2))
    u.alpha = [a / np.sqrt(2) for a in u.alpha]
    w.alpha = [a / np.sqrt(2) for a in w.alpha]
    assert not u.concat(w).violations(frame.C)
    mid = endpoint(frame, [0, 0, 0], u)
    end = endpoint(frame, mid, w)
    np.testing.assert_allclose(endpoint(frame, [0, 0, 0], u.concat(w)), end, atol=1e-8)


def test_zero_signal_stays_put_with_unit_energy(frame):
    p = integrate_control(frame, [0.1, 0.2, 0.3], ControlSignal.zero(2))
    np.testing.assert_allclose(p.x, [[0.1, 0.2, 0.3]] * len(p))
    assert p.meta["energy"] == pytest.approx(0.5)


def test_drift_against_scipy(frame):
    u = ControlSignal.constant(2, 1.0)
    p = integrate_control(frame, [0.2, -0.1, 0.0], u)

    def X0(s, y):
        return frame.fields(y)[0]

    ref = solve_ivp(X0, (0, 1), [0.2, -0.1, 0.0], method="DOP853", rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(p.x[-1], ref.y[:, -1], atol=1e-9)
    np.testing.assert_allclose(drift_flow(frame, [0.2, -0.1, 0.0]), ref.y[:, -1], atol=1e-9)
    assert np.all(p.diagnostics["omega_v"] < 0)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_energy_bound_and_sign(frame, seed):
    u = random_signal(frame, np.random.default_rng(seed))
    p = integrate_control(frame, [0, 0, 0], u)
    rep = energy_bound_check(frame, u, p)
    assert rep["passed"] and rep["chain_ok"]
    assert rep["E"] <= rep["tighter_bound"] <= rep["bound"]
    moving = np.linalg.norm(p.v, axis=1) > 0
    assert np.all(p.diagnostics["omega_v"][moving] < 0)


def test_reach_vertical_target(frame):
    x1 = np.array([0.0, 0.0, 0.05])
    res = reach(frame, np.zeros(3), x1, tol=1e-4)
    assert res.distance <= 1e-4
    np.testing.assert_allclose(endpoint(frame, np.zeros(3), res.signal), x1, atol=1e-4)
    assert not res.signal.violations(frame.C)


def test_reach_failure_reports_best(frame):
    with pytest.raises(ReachFailure) as ei:
        reach(frame, np.zeros(3), np.array([0.9, -0.9, 0.9]), tol=1e-12, budget=30)
    assert np.isfinite(ei.value.best_distance)
