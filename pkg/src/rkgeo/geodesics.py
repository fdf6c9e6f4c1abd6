"""Geodesic flow of the lifted metrics g_eps and the Fermat correspondence.

Geodesics are always integrated in the (m+1)-dimensional lift, where the
equations stay smooth down to eps = 0; F_eps-geodesics are read off as the
spatial part of t-parametrized future-pointing lightlike pregeodesics.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import AccuracyError, InsufficientDataError, ParametrizationError
from .finsler import finsler_values
from .manifold import ChartManifold
from .ode import dopri5
from .paths import GeodesicPath
from .spacetime import SpacetimeState, lifted_christoffel, lifted_metric

UNIT_TOL = 1e-6


class _ChristoffelCache:
    """Christoffel lookup with a shortcut for constant-coefficient manifolds."""

    def __init__(self, M: ChartManifold, eps: float):
        self.M = M
        self.eps = eps
        self.const = lifted_christoffel(M.fields(np.zeros(M.dim)), eps) if M.is_constant else None
        self.flat = self.const is not None and not np.any(self.const)

    def __call__(self, x):
        if self.const is not None:
            return self.const
        return lifted_christoffel(self.M.fields(x), self.eps)


def _invariants(M, eps, X, V):
    """Killing constant and g_eps(V, V) along samples (batched)."""
    m = M.dim
    f = M.fields(X[..., :m])
    G = lifted_metric(f, eps)
    q = np.einsum("...a,...ab,...b->...", V, G, V)
    C = np.einsum("...i,...i->...", f.omega, V[..., :m]) - (f.lam + eps) * V[..., m]
    return C, q


def integrate_geodesic(
    M: ChartManifold,
    initial: SpacetimeState,
    eps: float,
    s_max: float,
    tol: float = 1e-9,
    n_samples: int | None = None,
    monitor_factor: float = 100.0,
    check_domain: bool = True,
) -> GeodesicPath:
    """Affinely parametrized geodesic of g_eps from ``initial`` over [0, s_max].

    After every accepted step the Killing constant and g_eps(v, v) are
    compared with their initial values; a drift beyond
    ``monitor_factor * tol * (1 + |C0|)`` (resp. ``(1 + |v0|^2)``) raises
    :class:`AccuracyError` carrying the partial path.  Leaving the domain or
    step-size underflow truncates the path and records the reason.
    """
    m = M.dim
    n = m + 1
    V0 = initial.velocity
    if not np.any(V0):
        raise ValueError("initial velocity must be nonzero")
    gamma = _ChristoffelCache(M, eps)

    def rhs(s, y):
        X, V = y[:n], y[n:]
        if gamma.flat:
            return np.concatenate([V, np.zeros(n)])
        Gam = gamma(X[:m])
        return np.concatenate([V, -np.einsum("abc,b,c->a", Gam, V, V)])

    C0, q0 = (float(a) for a in _invariants(M, eps, initial.position, V0))
    f0 = M.fields(initial.x)
    v0n2 = float(V0[:m] @ f0.g0 @ V0[:m] + V0[m] ** 2)
    c_bound = monitor_factor * tol * (1 + abs(C0))
    q_bound = monitor_factor * tol * (1 + v0n2)
    state = {"breach": None, "dC": 0.0, "dq": 0.0}

    def on_step(s, y):
        if check_domain and not M.in_domain(y[:m]):
            return "left domain"
        C, q = _invariants(M, eps, y[:n], y[n:])
        dC, dq = abs(float(C) - C0), abs(float(q) - q0)
        state["dC"] = max(state["dC"], dC)
        state["dq"] = max(state["dq"], dq)
        if dC > c_bound or dq > q_bound:
            state["breach"] = f"monitor breach at s={s:.6g}: |dC|={dC:.3e}, |dq|={dq:.3e}"
            return state["breach"]
        return None

    y0 = np.concatenate([initial.position, V0])
    t_eval = np.linspace(0.0, s_max, n_samples) if n_samples else None
    sol = dopri5(rhs, (0.0, s_max), y0, rtol=tol, atol=tol, t_eval=t_eval, on_step=on_step)
    path = _make_path(M, eps, sol.t, sol.y[:, :n], sol.y[:, n:], "affine")
    path.meta.update(C0=C0, q0=q0, max_drift_C=state["dC"], max_drift_q=state["dq"],
                     n_steps=sol.n_steps, tol=tol)
    if sol.status != "success":
        path.truncated = sol.message
    if state["breach"]:
        raise AccuracyError(state["breach"], path=path)
    return path


def integrate_batch(M, initials: Sequence[SpacetimeState], eps, s_max, tol=1e-9, **kw):
    """Independent integrations; results are in input order."""
    return [integrate_geodesic(M, st, eps, s_max, tol, **kw) for st in initials]


def _make_path(M, eps, s, X, V, parametrization, spacetime=True):
    C, q = _invariants(M, eps, X, V)
    diag = {"C": np.asarray(C, float) + 0 * s, "lightlike_residual": np.asarray(q, float) + 0 * s}
    return GeodesicPath(s, X, V, parametrization, eps, spacetime, diagnostics=diag)


def t_graph_rhs(M: ChartManifold, eps: float):
    """Right-hand side of the t-parametrized geodesic equation on (sigma, sigma')."""
    m = M.dim
    gamma = _ChristoffelCache(M, eps)

    def rhs(t, y):
        x, u = y[:m], y[m:]
        if gamma.flat:
            return np.concatenate([u, np.zeros(m)])
        Gam = gamma(x)
        W = np.append(u, 1.0)
        acc = np.einsum("abc,b,c->a", Gam, W, W)
        return np.concatenate([u, -acc[:m] + u * acc[m]])

    return rhs


def integrate_t_graph(
    M: ChartManifold,
    x0,
    v0,
    eps: float,
    T: float,
    tol: float = 1e-10,
    n_samples: int | None = None,
    t0: float = 0.0,
    check_domain: bool = True,
) -> GeodesicPath:
    """Pregeodesic of g_eps written as a graph ``t -> (sigma(t), t)``.

    For a lightlike initial vector ``(v0, 1)`` the spatial part is the
    F_eps-geodesic with F_eps(sigma') = 1.  Returns the lifted path.
    """
    m = M.dim
    rhs = t_graph_rhs(M, eps)

    def on_step(t, y):
        if check_domain and not M.in_domain(y[:m]):
            return "left domain"
        return None

    y0 = np.concatenate([np.asarray(x0, float), np.asarray(v0, float)])
    t_eval = np.linspace(0.0, T, n_samples) if n_samples else None
    sol = dopri5(rhs, (0.0, T), y0, rtol=tol, atol=tol, t_eval=t_eval, on_step=on_step)
    tt = sol.t
    X = np.column_stack([sol.y[:, :m], t0 + tt])
    V = np.column_stack([sol.y[:, m:], np.ones_like(tt)])
    path = _make_path(M, eps, t0 + tt, X, V, "t-graph")
    path.meta.update(n_steps=sol.n_steps, tol=tol)
    if sol.status != "success":
        path.truncated = sol.message
    return path


def t_graph_endpoint(M, x0, v0, eps, T, tol=1e-10, check_domain=True):
    """Endpoint ``(sigma(T), sigma'(T), status)`` of the t-graph flow (no sampling)."""
    m = M.dim
    rhs = t_graph_rhs(M, eps)

    def on_step(t, y):
        if check_domain and not M.in_domain(y[:m]):
            return "left domain"
        return None

    y0 = np.concatenate([np.asarray(x0, float), np.asarray(v0, float)])
    sol = dopri5(rhs, (0.0, T), y0, rtol=tol, atol=tol, on_step=on_step)
    return sol.y[-1, :m], sol.y[-1, m:], sol.status, sol.message


# ---------------------------------------------------------------------------
# Fermat correspondence


def fermat_lift(M: ChartManifold, sigma: GeodesicPath, eps: float = 0.0, t0: float = 0.0) -> GeodesicPath:
    """Graph ``(sigma(s), t0 + s - s_0)`` of an F_eps-unit spatial curve."""
    if sigma.spacetime:
        raise ParametrizationError("fermat_lift expects a spatial path")
    F = finsler_values(M, sigma.x, sigma.v, eps)
    dev = np.abs(F - 1.0)
    if np.any(~np.isfinite(dev)) or np.max(dev) > UNIT_TOL:
        k = int(np.nanargmax(np.where(np.isfinite(dev), dev, np.inf)))
        raise ParametrizationError(
            f"path is not F_eps-unit parametrized: |F - 1| = {dev[k]:.3e} at sample {k}")
    t = t0 + sigma.s - sigma.s[0]
    X = np.column_stack([sigma.x, t])
    V = np.column_stack([sigma.v, np.ones_like(t)])
    lifted = _make_path(M, eps, sigma.s, X, V, "t-graph")
    lifted.meta.update(sigma.meta)
    return lifted


def project(gamma: GeodesicPath) -> GeodesicPath:
    """Spatial part of a future-pointing lifted path, reparametrized by t.

    The result starts at s = 0; the starting time is kept in ``meta["t0"]``.
    """
    if not gamma.spacetime:
        raise ParametrizationError("project expects a spacetime path")
    t = gamma.x[:, -1]
    tdot = gamma.v[:, -1]
    if np.any(tdot <= 0):
        raise ParametrizationError("path is not future-pointing (dt/ds <= 0 somewhere)")
    v = gamma.v[:, :-1] / tdot[:, None]
    out = GeodesicPath(t - t[0], gamma.x[:, :-1], v, "F_eps-unit", gamma.eps, False,
                       meta=dict(gamma.meta, t0=float(t[0])))
    return out


def _fd_weights(z: float, x: np.ndarray) -> np.ndarray:
    """Fornberg weights for the first derivative at ``z`` on nodes ``x``."""
    n = len(x)
    c = np.zeros((n, 2))
    c1, c4 = 1.0, x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, 1)
        c2, c5, c4 = 1.0, c4, x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, 1]


def differentiate(s: np.ndarray, y: np.ndarray, stencil: int = 5) -> np.ndarray:
    """First derivative of sampled ``y(s)`` (rows) with local 5-point stencils."""
    n = len(s)
    out = np.empty_like(y)
    half = stencil // 2
    for k in range(n):
        lo = min(max(0, k - half), n - stencil)
        idx = slice(lo, lo + stencil)
        w = _fd_weights(s[k], s[idx])
        out[k] = w @ y[idx]
    return out


def pregeodesic_residual(M: ChartManifold, gamma: GeodesicPath, eps: float = 0.0, per_sample: bool = False):
    """Max norm of the part of ``gamma'' + Gamma(gamma', gamma')`` orthogonal to gamma'.

    Accelerations come from finite differences of the sampled velocities;
    norms and orthogonality use the product metric g0 + dt^2.
    """
    if len(gamma) < 5:
        raise InsufficientDataError("pregeodesic_residual needs at least 5 samples")
    if not gamma.spacetime:
        raise ParametrizationError("pregeodesic_residual expects a path in S x R")
    m = M.dim
    acc = differentiate(gamma.s, gamma.v)
    f = M.fields(gamma.x[:, :m])
    Gam = lifted_christoffel(f, eps)
    a = acc + np.einsum("kabc,kb,kc->ka", Gam, gamma.v, gamma.v)
    P = np.zeros((len(gamma), m + 1, m + 1))
    P[:, :m, :m] = f.g0
    P[:, m, m] = 1.0
    vv = np.einsum("ka,kab,kb->k", gamma.v, P, gamma.v)
    av = np.einsum("ka,kab,kb->k", a, P, gamma.v)
    perp = a - (av / vv)[:, None] * gamma.v
    res = np.sqrt(np.maximum(np.einsum("ka,kab,kb->k", perp, P, perp), 0.0))
    return res if per_sample else float(np.max(res))


# ---------------------------------------------------------------------------
# Simultaneous convexity


def _family_christoffel(family) -> tuple[Callable, int]:
    if isinstance(family, ChartManifold):
        m = family.dim

        def gam(points, eps):
            return lifted_christoffel(family.fields(points[..., :m]), eps)

        return gam, m + 1
    gam, n = family
    return gam, n


def convexity_certificate(
    family,
    p0,
    eps_grid: Sequence[float],
    delta_grid: Sequence[float],
    margin: float = 0.0,
    max_points: int = 33 ** 3,
):
    """Largest delta on ``delta_grid`` with ``B^eps = I - x^k Gamma^k`` positive
    definite (minimum eigenvalue > ``margin``) on ``{|x - p0|^2 < delta}`` for
    every eps on ``eps_grid``.

    ``family`` is a :class:`ChartManifold` (the lifted metrics g_eps, p0 given
    in S or S x R coordinates) or a pair ``(christoffel(points, eps), n)``.
    Returns ``(delta or None, report)``; the report holds the worst eigenvalue
    for every (delta, eps).
    """
    gam, n = _family_christoffel(family)
    p0 = np.asarray(p0, float)
    if p0.size == n - 1 and isinstance(family, ChartManifold):
        p0 = np.append(p0, 0.0)
    per_axis = max(3, min(33, int(np.floor(max_points ** (1.0 / n)))))
    if per_axis % 2 == 0:
        per_axis -= 1
    deltas = sorted(float(d) for d in delta_grid)
    table = []
    best = None
    prefix_ok = True
    for delta in deltas:
        r = np.sqrt(delta)
        ax = np.linspace(-r, r, per_axis)
        lat = np.stack(np.meshgrid(*([ax] * n), indexing="ij"), axis=-1).reshape(-1, n)
        lat = lat[np.sum(lat ** 2, axis=-1) < delta]
        row = {"delta": delta, "n_points": int(len(lat)), "min_eig": {}}
        ok = True
        for eps in eps_grid:
            Gm = gam(p0 + lat, float(eps))
            B = np.eye(n) - np.einsum("pk,pkij->pij", lat, Gm)
            B = 0.5 * (B + np.swapaxes(B, -1, -2))
            worst = float(np.min(np.linalg.eigvalsh(B)[:, 0]))
            row["min_eig"][repr(float(eps))] = worst
            ok &= worst > margin
        row["passed"] = bool(ok)
        table.append(row)
        prefix_ok &= ok
        if prefix_ok:
            best = delta
    report = {"p0": p0.tolist(), "eps_grid": [float(e) for e in eps_grid], "margin": margin,
              "points_per_axis": per_axis, "table": table, "delta": best}
    return best, report
