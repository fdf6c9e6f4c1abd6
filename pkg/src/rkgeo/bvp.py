"""Two-point boundary problems for F_eps: shooting, winding-class multi-start
and continuation eps -> 0.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import (AdmissibilityError, DegenerateInputError, HypothesisViolation, ParameterError,
                     ShootingFailure)
from .finsler import LAMBDA_TOL, curve_length_energy, finsler_values
from .geodesics import fermat_lift, integrate_t_graph, pregeodesic_residual, project, t_graph_endpoint
from .manifold import TWO_PI, ChartManifold
from .paths import GeodesicPath, resample

INTEGRATION_TOL = 1e-12
FD_STEP = 1e-7
COND_MAX = 1e12
E_CAP = 1e3
LIMIT_RESIDUAL = 1e-5


@dataclass
class ShootingProblem:
    manifold: ChartManifold
    x0: np.ndarray
    x1: np.ndarray
    eps: float
    homotopy_hint: tuple | None = None  # winding integers, one per periodic axis
    t0: float = 0.0

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        self.x1 = np.asarray(self.x1, dtype=float)
        if not self.eps > 0:
            raise ParameterError(f"shooting needs eps > 0, got {self.eps}")
        M = self.manifold
        M.check_domain(self.x0)
        M.check_domain(self.x1)
        axes = M.periodic_axes
        if self.homotopy_hint is None:
            self.homotopy_hint = (0,) * len(axes)
        hint = tuple(int(k) for k in np.atleast_1d(self.homotopy_hint))
        if len(hint) != len(axes):
            raise ParameterError(f"{M.topology} topology takes {len(axes)} winding integers, got {len(hint)}")
        self.homotopy_hint = hint

    def with_eps(self, eps):
        return ShootingProblem(self.manifold, self.x0, self.x1, eps, self.homotopy_hint, self.t0)

    def target(self) -> np.ndarray:
        """x1 in the universal cover, on the sheet selected by the winding hint."""
        tgt = self.x1.copy()
        for i, k in zip(self.manifold.periodic_axes, self.homotopy_hint):
            delta = np.mod(self.x1[i] - self.x0[i], TWO_PI)
            tgt[i] = self.x0[i] + delta + TWO_PI * k
        return tgt


def winding_number(M: ChartManifold, path: GeodesicPath) -> tuple:
    """Winding integers of an (unwrapped) spatial path along the periodic axes."""
    x = path.spatial_x
    out = []
    for i in M.periodic_axes:
        delta = np.mod(x[-1, i] - x[0, i], TWO_PI)
        out.append(int(np.round((x[-1, i] - x[0, i] - delta) / TWO_PI)))
    return tuple(out)


# ---------------------------------------------------------------------------
# Shooting


def _frame(M, x0):
    """Columns form a g0-orthonormal basis at x0."""
    g = M.fields(x0).g0
    L = np.linalg.cholesky(g)
    return np.linalg.inv(L).T


def _sphere(phi):
    m = len(phi) + 1
    e = np.ones(m)
    for k, p in enumerate(phi):
        e[k] *= np.cos(p)
        e[k + 1:] *= np.sin(p)
    return e


def _angles(e):
    e = e / np.linalg.norm(e)
    m = len(e)
    phi = np.empty(m - 1)
    for k in range(m - 2):
        phi[k] = np.arctan2(np.linalg.norm(e[k + 1:]), e[k])
    phi[m - 2] = np.arctan2(e[m - 1], e[m - 2])
    return phi


class _Shooter:
    def __init__(self, problem: ShootingProblem):
        self.p = problem
        self.M = problem.manifold
        self.E = _frame(self.M, problem.x0)
        self.target = problem.target()
        self.g1 = self.M.fields(problem.x1).g0

    def velocity(self, phi):
        u = self.E @ _sphere(phi)
        F = float(finsler_values(self.M, self.p.x0, u, self.p.eps))
        return u / F

    def unknowns(self, v, T):
        e = np.linalg.solve(self.E, v)
        return np.append(_angles(e), T)

    def residual(self, z):
        v = self.velocity(z[:-1])
        x, _, status, msg = t_graph_endpoint(self.M, self.p.x0, v, self.p.eps, z[-1], INTEGRATION_TOL)
        if status != "success":
            return None, msg
        return x - self.target, ""

    def error(self, r):
        return float(np.sqrt(max(r @ self.g1 @ r, 0.0)))


def straight_guess(problem: ShootingProblem):
    """Chart-straight initial velocity (F_eps-unit) and its F_eps-length."""
    M = problem.manifold
    d = problem.target() - problem.x0
    F = float(finsler_values(M, problem.x0, d, problem.eps))
    return d / F, F


def shoot(problem: ShootingProblem, guess=None, tol: float = 1e-9, max_iter: int = 40,
          T_guess: float | None = None, n_samples: int | None = None) -> GeodesicPath:
    """Newton shooting for the F_eps-geodesic from x0 to x1.

    Unknowns are the direction of the initial F_eps-unit velocity (m - 1
    angles in a g0-orthonormal frame at x0) and the arrival time T; the
    endpoint map is the t-graph flow of the lifted metric.  Returns the
    spatial path sampled in t (F_eps-unit) with diagnostics in ``meta``.
    """
    M = problem.manifold
    target = problem.target()
    if np.allclose(target, problem.x0, atol=1e-14):
        raise DegenerateInputError("endpoints coincide in the selected class; the constant curve is the solution")
    sh = _Shooter(problem)
    if guess is None:
        v, T = straight_guess(problem)
    else:
        v = np.asarray(guess, dtype=float)
        v = v / float(finsler_values(M, problem.x0, v, problem.eps))
        T = T_guess if T_guess is not None else straight_guess(problem)[1]
    z = sh.unknowns(v, T)
    r, msg = sh.residual(z)
    if r is None:
        raise ShootingFailure(f"initial guess integration failed: {msg}", "integration", z)
    err = sh.error(r)
    n = len(z)
    it = 0
    while err >= tol:
        if it >= max_iter:
            raise ShootingFailure(f"Newton did not converge in {max_iter} iterations (endpoint error {err:.3e})",
                                  "diverged", z, err)
        it += 1
        J = np.empty((n, n))
        for j in range(n):
            h = FD_STEP * max(1.0, abs(z[j]))
            zp = z.copy()
            zp[j] += h
            rp, msg = sh.residual(zp)
            if rp is None:
                raise ShootingFailure(f"integration failed while differencing: {msg}", "integration", z, err)
            J[:, j] = (rp - r) / h
        cond = np.linalg.cond(J)
        if not np.isfinite(cond) or cond > COND_MAX:
            raise ShootingFailure(f"endpoint Jacobian singular (cond {cond:.3e})", "conjugate-like", z, err)
        step = np.linalg.solve(J, -r)
        lam = 1.0
        for _ in range(30):
            zn = z + lam * step
            if zn[-1] > 0:
                rn, _ = sh.residual(zn)
                if rn is not None and sh.error(rn) < err:
                    break
            lam *= 0.5
        else:
            raise ShootingFailure(f"damped Newton step failed to reduce endpoint error {err:.3e}",
                                  "diverged", z, err)
        z, r, err = zn, rn, sh.error(rn)

    v, T = sh.velocity(z[:-1]), float(z[-1])
    if n_samples is None:
        n_samples = int(np.clip(T / 0.01, 401, 4001))
    lifted = integrate_t_graph(M, problem.x0, v, problem.eps, T, INTEGRATION_TOL, n_samples=n_samples,
                               t0=problem.t0)
    sigma = project(lifted)
    finish_path(M, sigma, problem.eps)
    unit = finsler_values(M, sigma.x, sigma.v, problem.eps)
    sigma.meta.update(
        winding=list(winding_number(M, sigma)),
        eps=problem.eps,
        arrival_time=problem.t0 + T,
        T=T,
        endpoint_error=err,
        iterations=it,
        unit_speed_deviation=float(np.max(np.abs(unit - 1.0))),
        pregeodesic_residual=pregeodesic_residual(M, lifted, problem.eps),
        lightlike_residual=float(np.max(np.abs(lifted.diagnostics["lightlike_residual"]))),
    )
    return sigma


def finish_path(M, sigma: GeodesicPath, eps: float):
    """Fill length/energy fields; the F-length is NaN where the path is inadmissible."""
    sigma.length_Feps, sigma.energy_Feps = curve_length_energy(M, sigma, eps)
    try:
        sigma.length_F = curve_length_energy(M, sigma, 0.0)[0]
    except AdmissibilityError:
        sigma.length_F = float("nan")
    return sigma


# ---------------------------------------------------------------------------
# Multi-start over winding classes


@dataclass
class MultiStart:
    solutions: list
    failures: dict = field(default_factory=dict)  # winding tuple -> message

    def __iter__(self):
        return iter(self.solutions)

    def __len__(self):
        return len(self.solutions)

    def __getitem__(self, i):
        return self.solutions[i]


def winding_classes(M: ChartManifold, k_max: int):
    axes = len(M.periodic_axes)
    rng = range(-k_max, k_max + 1)
    return [tuple(k) for k in itertools.product(rng, repeat=axes)]


def multi_start(problem: ShootingProblem, k_max: int, tol: float = 1e-9) -> MultiStart:
    """Shoot once per winding class with |k| <= k_max from the universal-cover
    straight line; successes are sorted by F_eps-length.
    """
    M = problem.manifold
    if not M.periodic_axes:
        raise ParameterError(f"multi_start needs a cylinder or torus topology, got {M.topology!r}")
    sols, failures = [], {}
    for k in winding_classes(M, k_max):
        sub = ShootingProblem(M, problem.x0, problem.x1, problem.eps, k, problem.t0)
        try:
            sols.append(shoot(sub, tol=tol))
        except (ShootingFailure, DegenerateInputError) as exc:
            failures[k] = str(exc)
    sols.sort(key=lambda p: (p.length_Feps, p.meta["winding"]))
    return MultiStart(sols, failures)


# ---------------------------------------------------------------------------
# Continuation in eps


def default_schedule(start=1e-1, stop=1e-6, ratio=0.5):
    out = []
    e = start
    while e > stop * (1 + 1e-12):
        out.append(e)
        e *= ratio
    out.append(stop)
    return out


@dataclass
class ContinuationTrace:
    eps_sequence: list
    paths: list
    lengths: list
    energies: list
    converged: bool = False
    limit_path: GeodesicPath | None = None
    diverged: bool = False
    failure: str | None = None
    reason: str = ""
    monotone: bool = True
    increments: list = field(default_factory=list)  # (sup distance, relative length change) per step
    limit_residual: float = float("nan")
    limit_length: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "eps_sequence": list(self.eps_sequence),
            "lengths": list(self.lengths),
            "energies": list(self.energies),
            "converged": self.converged,
            "diverged": self.diverged,
            "failure": self.failure,
            "reason": self.reason,
            "monotone": self.monotone,
            "increments": [list(i) for i in self.increments],
            "limit_residual": self.limit_residual,
            "limit_length": self.limit_length,
        }


def check_hypothesis(problem: ShootingProblem, atol: float = 1e-10):
    """Refuse closed problems at a point with Lambda = 0 and dLambda(ker omega) = 0."""
    M = problem.manifold
    if any(problem.homotopy_hint) or not np.allclose(M.wrap(problem.x0), M.wrap(problem.x1), atol=1e-12):
        return
    f = M.fields(problem.x0)
    if float(f.lam) > LAMBDA_TOL:
        return
    # dLambda vanishes on D = ker omega iff dLambda is a multiple of omega
    w = np.linalg.solve(f.g0, f.omega)
    on2 = float(f.omega @ w)
    dl = f.dlam
    par = dl - (float(dl @ w) / on2) * f.omega
    if np.sqrt(par @ np.linalg.solve(f.g0, par)) <= atol:
        raise HypothesisViolation(
            "x0 = x1 with Lambda(x0) = 0 and dLambda vanishing on ker omega at x0; "
            "the constant curve is a lightlike pregeodesic and continuation is refused")


def continue_eps(problem: ShootingProblem, eps_schedule=None, tol: float = 1e-5,
                 shoot_tol: float = 1e-10, E_cap: float = E_CAP) -> ContinuationTrace:
    """Follow the F_eps-geodesic down the schedule, warm-starting each solve.

    Convergence is declared when the last step changes the path by less than
    ``tol`` (sup g0-distance on a common resampling) and the length by less
    than ``tol * max(1, length)``.  Energies above ``E_cap`` stop the trace with a divergence
    report.
    """
    check_hypothesis(problem)
    sched = list(default_schedule() if eps_schedule is None else eps_schedule)
    if not sched or any(e <= 0 for e in sched) or any(b >= a for a, b in zip(sched, sched[1:])):
        raise ParameterError("eps schedule must be strictly decreasing positive values")
    M = problem.manifold
    trace = ContinuationTrace([], [], [], [])
    prev = None
    for eps in sched:
        sub = problem.with_eps(eps)
        try:
            if prev is None:
                sol = shoot(sub, tol=shoot_tol)
            else:
                T_guess = curve_length_energy(M, prev, eps)[0]
                sol = shoot(sub, guess=prev.v[0], T_guess=T_guess, tol=shoot_tol)
        except (ShootingFailure, DegenerateInputError) as exc:
            trace.failure = f"eps={eps:.3e}: {exc}"
            trace.reason = "shooting failure"
            break
        trace.eps_sequence.append(eps)
        trace.paths.append(sol)
        trace.lengths.append(sol.length_Feps)
        trace.energies.append(sol.energy_Feps)
        if prev is not None:
            dl = abs(sol.length_Feps - prev.length_Feps) / max(1.0, prev.length_Feps)
            trace.increments.append((_sup_distance(M, prev, sol), dl))
            if sol.length_Feps < prev.length_Feps - 1e-12 * max(1.0, prev.length_Feps):
                trace.monotone = False
        if sol.energy_Feps > E_cap:
            trace.diverged = True
            trace.reason = (f"energy {sol.energy_Feps:.4g} exceeds cap {E_cap:.4g} at eps={eps:.3e}; "
                            "no uniform energy bound, so no limit geodesic is reached")
            break
        prev = sol
    if trace.diverged or trace.failure or len(trace.paths) < 2:
        if not trace.reason:
            trace.reason = "schedule too short to assess convergence"
        return trace
    d, dl = trace.increments[-1]
    if d >= tol or dl >= tol:
        trace.reason = f"last increments (path {d:.3e}, relative length {dl:.3e}) not below {tol:g}"
        return trace
    limit, res = limit_path(M, trace.paths[-1], problem.t0)
    trace.limit_residual = res
    if limit is None or not res < LIMIT_RESIDUAL:
        trace.reason = f"limit path fails the eps = 0 pregeodesic check (residual {res:.3e})"
        return trace
    trace.limit_path = limit
    trace.limit_length = limit.length_F
    trace.converged = True
    trace.reason = "converged"
    return trace


def _sup_distance(M, a: GeodesicPath, b: GeodesicPath, n: int = 201) -> float:
    pa, pb = resample(a, n), resample(b, n)
    d = pb - pa
    g = M.fields(0.5 * (pa + pb)).g0
    return float(np.sqrt(np.max(np.einsum("ki,kij,kj->k", d, g, d))))


def limit_path(M: ChartManifold, sigma: GeodesicPath, t0: float = 0.0):
    """Reparametrize ``sigma`` by F-arclength and measure how far its t-graph is
    from a lightlike pregeodesic of the eps = 0 lift.
    """
    F = finsler_values(M, sigma.x, sigma.v, 0.0)
    if np.any(~np.isfinite(F)) or np.any(F <= 0):
        return None, float("inf")
    s = cumulative_trapezoid(F, sigma.s, initial=0.0)
    out = GeodesicPath(s, sigma.x, sigma.v / F[:, None], "F_eps-unit", 0.0, False, meta=dict(sigma.meta))
    lifted = fermat_lift(M, out, 0.0, t0)
    res = pregeodesic_residual(M, lifted, 0.0)
    finish_path(M, out, 0.0)
    out.meta.update(eps=0.0, arrival_time=t0 + out.length_F, pregeodesic_residual=res)
    return out, res


def arrival_time(M: ChartManifold, sigma: GeodesicPath, t0: float = 0.0) -> float:
    """``t0`` plus the F-length of an admissible spatial path."""
    return t0 + curve_length_energy(M, sigma, 0.0)[0]
