import numpy as np
import pytest
from scipy.integrate import solve_ivp

from rkgeo.ode import dopri5


def pendulum(t, y):
    return np.array([y[1], -np.sin(y[0])])


def test_matches_scipy_dop853():
    t_eval = np.linspace(0, 10, 21)
    ours = dopri5(pendulum, (0, 10), [1.0, 0.0], rtol=1e-11, atol=1e-11, t_eval=t_eval)
    ref = solve_ivp(pendulum, (0, 10), [1.0, 0.0], method="DOP853", rtol=1e-13, atol=1e-13, t_eval=t_eval)
    assert ours.success
    np.testing.assert_allclose(ours.y, ref.y.T, atol=1e-9)


def test_exponential_and_order():
    errs = []
    for tol in (1e-6, 1e-9):
        sol = dopri5(lambda t, y: -2 * y, (0, 1), [1.0], rtol=tol, atol=tol)
        errs.append(abs(sol.y[-1, 0] - np.exp(-2)))
        assert sol.t[-1] == 1.0
    assert errs[1] < errs[0] < 1e-5


def test_backward_integration():
    sol = dopri5(lambda t, y: y, (1, 0), [np.e], rtol=1e-12, atol=1e-12)
    assert sol.y[-1, 0] == pytest.approx(1.0, abs=1e-10)


def test_on_step_stops():
    sol = dopri5(lambda t, y: np.ones(1), (0, 10), [0.0], on_step=lambda t, y: "hit" if y[0] > 2 else None)
    assert sol.status == "stopped" and sol.message == "hit"
    assert 2 < sol.y[-1, 0] < 10


def test_nonfinite_is_reported():
    sol = dopri5(lambda t, y: y ** 2, (0, 2), [1.0], rtol=1e-8, atol=1e-8)
    assert not sol.success
    assert sol.status in ("nonfinite", "underflow")
