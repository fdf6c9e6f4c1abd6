"""Reference manifolds and random samplers shared by the invariant suite,
the CLI and the tests.
"""
from __future__ import annotations

import numpy as np

from .finsler import LAMBDA_TOL, finsler_values
from .manifold import ChartManifold, build_manifold, from_zermelo
from .spacetime import SpacetimeState


def polar_manifold() -> ChartManifold:
    """Polar chart of the plane, g0 = dr^2 + r^2 dth^2, with a radial one-form.

    Lambda = 3/4 and omega = -dr / 2 are the Zermelo data of a radial unit
    wind of strength 1/2 away from the origin.
    """
    return build_manifold([["1", "0"], ["0", "r^2"]], ["-0.5", "0"], "0.75",
                          bounds=[[0.5, 3.0], [-3.0, 3.0]], name="polar-wind", coords=("r", "th"))


POLAR_P0 = (1.0, 0.0)


def varying_wind_manifold() -> ChartManifold:
    """Plane with a smoothly varying wind of norm < 1."""
    return from_zermelo([["1", "0"], ["0", "1"]], ["0.4+0.3*sin(y)", "0.2*cos(x)"],
                        bounds=[[-4.0, 4.0], [-4.0, 4.0]], name="varying-wind")


def flat_family(n: int = 3):
    """``(christoffel(points, eps), n)`` of the family g_eps = (1 + eps) Euclidean."""

    def gam(points, eps):
        return np.zeros(np.shape(points)[:-1] + (n, n, n))

    return gam, n


def random_tangents(M: ChartManifold, n: int, rng: np.random.Generator, admissible: bool = True):
    """``(x, v)`` with x uniform on the domain box and Gaussian v.

    With ``admissible`` the sign of v is flipped where Lambda = 0 so that
    omega(v) < 0, and vectors with omega(v) ~ 0 there are redrawn.
    """
    xs = M.sample_points(n, rng)
    vs = rng.normal(size=(n, M.dim))
    if admissible:
        for _ in range(100):
            f = M.fields(xs)
            lam = np.broadcast_to(f.lam, (n,))
            b = np.einsum("ki,ki->k", f.omega, vs)
            vs = np.where(((lam <= LAMBDA_TOL) & (b > 0))[:, None], -vs, vs)
            bad = (lam <= LAMBDA_TOL) & (np.abs(b) < 1e-3 * np.linalg.norm(vs, axis=1))
            if not bad.any():
                break
            vs[bad] = rng.normal(size=(int(bad.sum()), M.dim))
    return xs, vs


def random_lightlike_states(M: ChartManifold, n: int, rng: np.random.Generator, eps: float = 0.0,
                            shrink: float = 0.5, speed: float = 0.2):
    """Future-pointing lightlike initial states for g_eps.

    Base points are drawn from the central ``shrink`` fraction of the domain,
    spatial velocities have g0-size ``speed`` times the smallest box width and
    ``tdot = F_eps(v)``.
    """
    lo, hi = M.bounds[:, 0], M.bounds[:, 1]
    c, w = 0.5 * (lo + hi), hi - lo
    xs = c + shrink * (rng.random((n, M.dim)) - 0.5) * w
    _, vs = random_tangents(M, n, rng)
    f = M.fields(xs)
    lam = np.broadcast_to(f.lam, (n,))
    b = np.einsum("ki,ki->k", f.omega, vs)
    vs = np.where(((lam <= LAMBDA_TOL) & (b > 0))[:, None], -vs, vs)
    norms = np.sqrt(np.einsum("ki,kij,kj->k", vs, f.g0, vs))
    vs = vs / norms[:, None] * speed * float(np.min(w))
    tau = finsler_values(M, xs, vs, eps)
    return [SpacetimeState(x, 0.0, v, t) for x, v, t in zip(xs, vs, tau)]
