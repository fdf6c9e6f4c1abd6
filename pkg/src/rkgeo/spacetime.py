"""The Lorentzian lift ``g_eps = g0 + omega (x) dt + dt (x) omega - (Lambda + eps) dt^2``
on S x R, with t the last coordinate.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, NumericalError
from .manifold import ChartManifold, FieldData

LIGHTLIKE_TOL = 1e-10
DET_MIN = 1e-14


@dataclass(frozen=True)
class SpacetimeState:
    x: np.ndarray
    t: float
    xdot: np.ndarray
    tdot: float

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "xdot", np.asarray(self.xdot, dtype=float))
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "tdot", float(self.tdot))

    @property
    def position(self) -> np.ndarray:
        return np.append(self.x, self.t)

    @property
    def velocity(self) -> np.ndarray:
        return np.append(self.xdot, self.tdot)


@dataclass(frozen=True)
class CausalLabel:
    kind: str  # timelike | lightlike | spacelike
    orientation: str  # future | past | none


def lifted_metric(f: FieldData, eps: float) -> np.ndarray:
    """(m+1) x (m+1) coefficient matrix of g_eps from field data (batched)."""
    m = f.omega.shape[-1]
    shape = f.omega.shape[:-1]
    G = np.zeros(shape + (m + 1, m + 1))
    G[..., :m, :m] = f.g0
    G[..., :m, m] = f.omega
    G[..., m, :m] = f.omega
    G[..., m, m] = -(f.lam + eps)
    return G


def lifted_metric_derivs(f: FieldData) -> np.ndarray:
    """``dG[..., k, a, b] = d_k G_ab``; the t-derivative row is zero."""
    m = f.omega.shape[-1]
    shape = f.omega.shape[:-1]
    dG = np.zeros(shape + (m + 1, m + 1, m + 1))
    dG[..., :m, :m, :m] = f.dg0
    dG[..., :m, :m, m] = f.domega
    dG[..., :m, m, :m] = f.domega
    dG[..., :m, m, m] = -f.dlam
    return dG


def metric_g_eps(M: ChartManifold, x, eps: float = 0.0) -> np.ndarray:
    return lifted_metric(M.fields(x), eps)


def eval_g_eps(M: ChartManifold, x, w1, w2, eps: float = 0.0) -> float:
    """``g_eps(w1, w2)`` for vectors ``w = (v, tau)`` at spatial point ``x``."""
    G = metric_g_eps(M, x, eps)
    return float(np.asarray(w1, float) @ G @ np.asarray(w2, float))


def _split(state_or_x, w=None):
    if isinstance(state_or_x, SpacetimeState):
        return state_or_x.x, state_or_x.velocity
    return np.asarray(state_or_x, float), np.asarray(w, float)


def classify(M: ChartManifold, state, eps: float = 0.0, w=None) -> CausalLabel:
    """Causal character of a nonzero tangent vector of S x R.

    The vector is normalized in the product metric g0 + dt^2 before the
    lightlike band ``|g_eps(w, w)| <= 1e-10`` is applied.
    """
    x, w = _split(state, w)
    f = M.fields(x)
    m = M.dim
    norm2 = w[:m] @ f.g0 @ w[:m] + w[m] ** 2
    if norm2 == 0.0:
        raise DegenerateInputError("cannot classify the zero vector")
    u = w / np.sqrt(norm2)
    q = float(u @ lifted_metric(f, eps) @ u)
    if abs(q) <= LIGHTLIKE_TOL:
        kind = "lightlike"
    elif q < 0:
        kind = "timelike"
    else:
        kind = "spacelike"
    if kind == "spacelike" or w[m] == 0.0:
        orientation = "none"
    else:
        orientation = "future" if w[m] > 0 else "past"
    return CausalLabel(kind, orientation)


def conserved_C(M: ChartManifold, state, eps: float = 0.0, w=None) -> float:
    """Killing constant ``g_eps(w, d_t) = omega(xdot) - (Lambda + eps) tdot``."""
    x, w = _split(state, w)
    f = M.fields(x)
    m = M.dim
    return float(f.omega @ w[:m] - (f.lam + eps) * w[m])


def lifted_christoffel(f: FieldData, eps: float) -> np.ndarray:
    """Christoffel symbols of g_eps (batched over leading axes of the field data)."""
    G = lifted_metric(f, eps)
    dG = lifted_metric_derivs(f)
    det = np.linalg.det(G)
    if np.any(np.abs(det) < DET_MIN):
        raise NumericalError(f"g_eps nearly degenerate (|det| = {np.min(np.abs(det)):.3e})",
                             condition=float(np.min(np.abs(det))))
    first = 0.5 * (np.einsum("...ilj->...lij", dG) + np.einsum("...jli->...lij", dG) - dG)
    n = G.shape[-1]
    sol = np.linalg.solve(G, first.reshape(first.shape[:-3] + (n, n * n)))
    return sol.reshape(first.shape)


def christoffel_g_eps(M: ChartManifold, x, eps: float = 0.0) -> np.ndarray:
    """``Gamma[a, b, c]`` of g_eps at spatial point ``x`` (t-independent)."""
    return lifted_christoffel(M.fields(x), eps)
