import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from rkgeo.errors import AdmissibilityError, ParameterError
from rkgeo.finsler import (ball_compactness_probe, curve_length_energy, eval_F, eval_F_eps, eval_h_eps,
                           finsler_values, grid_distances, is_admissible, kropina_branch, lightlike_root,
                           randers_branch)
from rkgeo.manifold import TangentSample, catalog
from rkgeo.paths import GeodesicPath


def zermelo_time(v, W):
    """Time to cover displacement v in unit time-speed boat with constant wind W (|W| < 1)."""
    v, W = np.asarray(v, float), np.asarray(W, float)
    return brentq(lambda T: np.linalg.norm(v - T * W) - T, 1e-12, 1e6, xtol=1e-15, rtol=1e-15)


@pytest.mark.parametrize("w", [0.0, 0.3, 0.5, 0.9])
def test_zermelo_travel_time_oracle(w):
    M = catalog("constant-wind-plane", w=w)
    rng = np.random.default_rng(0)
    for v in rng.normal(size=(20, 2)):
        F = eval_F(M, TangentSample([0.1, 0.2], v)).value
        assert F == pytest.approx(zermelo_time(v, [w, 0.0]), rel=1e-12)


def test_branches_and_kropina_examples():
    K = catalog("kropina-plane")
    # omega = -dx: K(v) = |v|^2 / (2 v_x)
    s = TangentSample([0, 0], [1.0, 1.0])
    assert eval_F(K, s).value == pytest.approx(1.0)
    assert eval_F(K, s).branch == "kropina"
    assert kropina_branch(K, s) == pytest.approx(1.0)
    assert eval_F(K, TangentSample([0, 0], [-1.0, 0.0])).value is None
    assert not is_admissible(K, [0, 0], [0.0, 1.0])
    R = catalog("constant-wind-plane", w=0.5)
    s = TangentSample([0, 0], [1.0, 0.0])
    assert eval_F(R, s).branch == "randers"
    assert randers_branch(R, s) == pytest.approx(2 / 3)
    assert eval_F(R, TangentSample([0, 0], [-1.0, 0.0])).value == pytest.approx(2.0)


def test_zero_vector_convention():
    assert eval_F(catalog("euclidean-plane"), TangentSample([0, 0], [0, 0])).value == 0.0
    assert eval_F(catalog("kropina-plane"), TangentSample([0, 0], [0, 0])).value is None


def test_eval_F_eps_requires_positive_eps():
    with pytest.raises(ParameterError):
        eval_F_eps(catalog("kropina-plane"), TangentSample([0, 0], [1, 0]), 0.0)


def test_lightlike_root_is_lightlike():
    M = catalog("heisenberg")
    rng = np.random.default_rng(1)
    for x, v in zip(rng.uniform(-1, 1, (20, 3)), rng.normal(size=(20, 3))):
        eps = 0.2
        tau = lightlike_root(M, TangentSample(x, v), eps)
        f = M.fields(x)
        q = v @ f.g0 @ v + 2 * (f.omega @ v) * tau - (f.lam + eps) * tau ** 2
        assert abs(q) <= 1e-12 * max(1.0, v @ v)


def test_h_eps_positive_definite():
    M = catalog("kropina-plane")
    H = np.array([[eval_H(M, i, j) for j in range(2)] for i in range(2)])
    assert np.all(np.linalg.eigvalsh(H) > 0)


def eval_H(M, i, j):
    e = np.eye(2)
    return eval_h_eps(M, [0.0, 0.0], e[i], e[j], 0.1)


@settings(max_examples=200, deadline=None)
@given(vx=st.floats(-5, 5), vy=st.floats(-5, 5), lam=st.floats(0.01, 100), eps=st.floats(0, 1))
def test_positive_homogeneity(vx, vy, lam, eps):
    M = catalog("constant-wind-plane", w=0.5)
    v = np.array([vx, vy])
    if not np.any(v):
        return
    a = float(finsler_values(M, [0, 0], lam * v, eps))
    b = lam * float(finsler_values(M, [0, 0], v, eps))
    assert a == pytest.approx(b, rel=1e-13)


@settings(max_examples=200, deadline=None)
@given(vx=st.floats(0.01, 5), vy=st.floats(-5, 5), e1=st.floats(1e-6, 0.5), de=st.floats(1e-4, 0.5))
def test_eps_monotone_below_kropina(vx, vy, e1, de):
    M = catalog("kropina-plane")
    v = np.array([vx, vy])
    f0 = float(finsler_values(M, [0, 0], v, 0.0))
    f1 = float(finsler_values(M, [0, 0], v, e1))
    f2 = float(finsler_values(M, [0, 0], v, e1 + de))
    assert f2 < f1 < f0


def test_eps_limit_converges():
    M = catalog("kropina-plane")
    v = [0.3, 1.0]
    f0 = float(finsler_values(M, [0, 0], v))
    errs = [abs(float(finsler_values(M, [0, 0], v, e)) - f0) for e in (1e-2, 1e-4, 1e-6)]
    assert errs[0] > errs[1] > errs[2] and errs[2] < 1e-5


def test_length_energy_of_straight_segment():
    M = catalog("constant-wind-plane", w=0.5)
    s = np.linspace(0, 2, 41)
    v = np.tile([1.0, 0.0], (41, 1))
    p = GeodesicPath(s, np.column_stack([s, 0 * s]), v, "affine", spacetime=False)
    L, E = curve_length_energy(M, p)
    assert L == pytest.approx(4 / 3)
    assert E == pytest.approx(0.5 * L ** 2)


def test_length_rejects_inadmissible_kropina_velocity():
    M = catalog("kropina-plane")
    s = np.linspace(0, 1, 5)
    p = GeodesicPath(s, np.column_stack([-s, 0 * s]), np.tile([-1.0, 0], (5, 1)), "affine", spacetime=False)
    with pytest.raises(AdmissibilityError):
        curve_length_energy(M, p)


def test_grid_distance_is_a_close_upper_bound():
    M = catalog("euclidean-plane", bounds=[[-1, 1], [-1, 1]])
    D = grid_distances(M, [[-0.5, -0.5], [0.5, 0.25]], eps=1e-9, grid=41)
    true = np.hypot(1.0, 0.75)
    assert true - 1e-9 <= D[0, 1] <= 1.09 * true


def test_ball_probe_asymmetric_distances():
    rep = ball_compactness_probe(catalog("constant-wind-plane", w=0.5, bounds=[[-2, 2], [-2, 2]]),
                                 [0, 0], [1, 0], 1.0, 0.1, grid=41)
    assert rep.d_forward < rep.d_backward
    d = rep.to_dict()
    assert set(d) >= {"d_forward", "d_backward", "contained", "inconclusive", "reason"}
