"""The Randers-Kropina metric F, its Randers regularizations F_eps, the
tensors h and h_eps, curve functionals, and a grid probe for forward/backward
ball compactness.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, sparse
from scipy.sparse import csgraph

from .errors import AdmissibilityError, ParameterError
from .manifold import ChartManifold, TangentSample
from .paths import GeodesicPath

LAMBDA_TOL = 1e-12


@dataclass(frozen=True)
class FinslerValue:
    value: float | None
    branch: str  # randers | kropina | zero-vector-convention

    @property
    def defined(self) -> bool:
        return self.value is not None


def _abc(M: ChartManifold, x, v):
    """``(Lambda, omega(v), g0(v, v))``, vectorized over leading axes."""
    f = M.fields(x)
    v = np.asarray(v, dtype=float)
    b = np.einsum("...i,...i->...", f.omega, v)
    c = np.einsum("...i,...ij,...j->...", v, f.g0, v)
    return np.asarray(f.lam) + 0.0 * b, b, c


def _positive_root(a, b, c):
    """Positive root tau of ``c + 2 b tau - a tau^2 = 0`` for a > 0.

    Written as ``c / (-b + sqrt(a c + b^2))`` and rearranged per sign of b to
    avoid cancellation.
    """
    disc = np.sqrt(a * c + b * b)
    with np.errstate(divide="ignore", invalid="ignore"):
        neg = c / (disc - b)
        pos = (disc + b) / a
    return np.where(b < 0, neg, pos)


def finsler_values(M: ChartManifold, x, v, eps: float = 0.0):
    """Vectorized F (eps=0) or F_eps.  Undefined entries are NaN."""
    lam, b, c = _abc(M, x, v)
    a = lam + eps
    with np.errstate(divide="ignore", invalid="ignore"):
        out = _positive_root(a, b, c)
        if eps == 0:
            out = np.where((a <= LAMBDA_TOL) & (b >= 0), np.nan, out)
    out = np.where(c == 0, np.where(a > LAMBDA_TOL, 0.0, np.nan), out)
    return out


def eval_F(M: ChartManifold, s: TangentSample) -> FinslerValue:
    """The Randers-Kropina metric at a tangent vector."""
    lam, b, c = (float(q) for q in _abc(M, s.x, s.v))
    if c == 0.0:
        return FinslerValue(0.0 if lam > LAMBDA_TOL else None, "zero-vector-convention")
    if lam > LAMBDA_TOL:
        return FinslerValue(float(_positive_root(lam, b, c)), "randers")
    if b >= 0:
        return FinslerValue(None, "kropina")
    # unified formula; Lambda within tolerance of zero is still used as given
    return FinslerValue(float(c / (-b + np.sqrt(max(lam, 0.0) * c + b * b))), "kropina")


def eval_F_eps(M: ChartManifold, s: TangentSample, eps: float) -> float:
    if not eps > 0:
        raise ParameterError(f"eps must be > 0, got {eps}")
    lam, b, c = (float(q) for q in _abc(M, s.x, s.v))
    if c == 0.0:
        return 0.0
    return float(_positive_root(lam + eps, b, c))


def randers_branch(M: ChartManifold, s: TangentSample) -> float:
    """``R(v) = (omega(v) + sqrt(Lambda g0(v,v) + omega(v)^2)) / Lambda`` (Lambda > 0)."""
    lam, b, c = (float(q) for q in _abc(M, s.x, s.v))
    return (b + np.sqrt(lam * c + b * b)) / lam


def kropina_branch(M: ChartManifold, s: TangentSample) -> float:
    """``K(v) = -g0(v, v) / (2 omega(v))`` (omega(v) < 0)."""
    _, b, c = (float(q) for q in _abc(M, s.x, s.v))
    return -0.5 * c / b


def lightlike_root(M: ChartManifold, s: TangentSample, eps: float = 0.0) -> float | None:
    """tau > 0 making ``(v, tau)`` lightlike for g_eps, or None.

    Solved as a polynomial (companion-matrix roots) and polished by Newton
    steps, independently of the closed-form metric.
    """
    lam, b, c = (float(q) for q in _abc(M, s.x, s.v))
    a = lam + eps
    if c == 0.0:
        return None
    if a <= (LAMBDA_TOL if eps == 0 else 0.0):
        a = 0.0
    coeffs = [-a, 2.0 * b, c]  # p(tau) = -a tau^2 + 2 b tau + c
    roots = np.roots(coeffs) if a != 0.0 else np.roots(coeffs[1:])
    cands = [r.real for r in np.atleast_1d(roots) if abs(r.imag) <= 1e-9 * max(1.0, abs(r)) and r.real > 0]
    if not cands:
        return None
    tau = max(cands)
    for _ in range(3):
        p = -a * tau * tau + 2.0 * b * tau + c
        dp = -2.0 * a * tau + 2.0 * b
        if dp == 0:
            break
        step = p / dp
        tau -= step
        if abs(step) <= 1e-17 * abs(tau):
            break
    return tau if tau > 0 else None


def eval_h_eps(M: ChartManifold, x, u, w, eps: float = 0.0) -> float:
    """``h_eps(u, w) = (Lambda + eps) g0(u, w) + omega(u) omega(w)``."""
    f = M.fields(x)
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    return float((f.lam + eps) * (u @ f.g0 @ w) + (f.omega @ u) * (f.omega @ w))


def is_admissible(M: ChartManifold, x, v) -> bool:
    lam, b, _ = _abc(M, x, v)
    return bool(lam > LAMBDA_TOL or b < 0)


# ---------------------------------------------------------------------------
# Curve functionals


def _quad(y, s):
    if len(s) < 2:
        return 0.0
    if len(s) == 2:
        return float(integrate.trapezoid(y, s))
    return float(integrate.simpson(y, x=s))


def speed_profile(M: ChartManifold, path: GeodesicPath, eps: float = 0.0):
    """F_eps of the spatial velocity at every sample.

    At eps = 0 a zero velocity where Lambda = 0 takes the value 1 (the usual
    0-section convention for energy bounds); such samples are returned in the
    second element.
    """
    x, v = path.spatial_x, path.spatial_v
    if eps > 0:
        return finsler_values(M, x, v, eps), np.zeros(len(path), dtype=bool)
    vals = finsler_values(M, x, v, 0.0)
    lam = np.broadcast_to(M.fields(x).lam, vals.shape)
    zero = np.all(v == 0.0, axis=-1) & (lam <= LAMBDA_TOL)
    vals = np.where(zero, 1.0, vals)
    bad = np.flatnonzero(np.isnan(vals))
    if bad.size:
        k = int(bad[0])
        raise AdmissibilityError(f"velocity at sample {k} is not admissible (omega(v) >= 0 where Lambda = 0)", index=k)
    return vals, zero


def curve_length_energy(M: ChartManifold, path: GeodesicPath, eps: float = 0.0):
    """``(length, energy)`` of the spatial curve for F_eps (F when eps = 0).

    The energy is that of the affine reparametrization on [0, 1], so that
    energy >= length^2 / 2 with equality for constant speed.
    """
    vals, _ = speed_profile(M, path, eps)
    s = path.s
    length = _quad(vals, s)
    span = s[-1] - s[0] if len(s) > 1 else 0.0
    energy = 0.5 * span * _quad(vals ** 2, s)
    return length, energy


# ---------------------------------------------------------------------------
# Ball compactness probe


@dataclass
class BallProbeReport:
    d_forward: float  # d(x0, x1)
    d_backward: float  # d(x1, x0)
    contained: bool | None
    inconclusive: bool
    reason: str
    spacing: list
    n_nodes: int
    n_intersection: int
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "d_forward": self.d_forward,
            "d_backward": self.d_backward,
            "contained": self.contained,
            "inconclusive": self.inconclusive,
            "reason": self.reason,
            "spacing": self.spacing,
            "n_nodes": self.n_nodes,
            "n_intersection": self.n_intersection,
        }


def _grid_graph(M: ChartManifold, n: int, eps: float):
    m = M.dim
    if m > 3:
        raise ParameterError("grid probe supports dimension 2 or 3")
    periodic = M.periodic_axes
    axes = []
    for i, (lo, hi) in enumerate(M.bounds):
        if i in periodic:
            axes.append(lo + (hi - lo) * np.arange(n) / n)
        else:
            axes.append(np.linspace(lo, hi, n))
    spacing = [float(a[1] - a[0]) for a in axes]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    shape = (n,) * m
    idx = np.arange(n ** m).reshape(shape)
    offsets = [o for o in np.ndindex(*(3,) * m) if any(k != 1 for k in o)]
    rows, cols, wts = [], [], []
    for off in offsets:
        d = np.array(off) - 1
        dst_index = []
        valid = np.ones(shape, dtype=bool)
        for i in range(m):
            ar = np.arange(n) + d[i]
            if i in periodic:
                ar = np.mod(ar, n)
            else:
                ok = (ar >= 0) & (ar < n)
                valid &= ok.reshape([n if j == i else 1 for j in range(m)])
                ar = np.clip(ar, 0, n - 1)
            dst_index.append(ar)
        dst = idx[np.ix_(*dst_index)]
        disp = d * np.array(spacing)
        mid = mesh + 0.5 * disp
        w = finsler_values(M, mid[valid], np.broadcast_to(disp, mid[valid].shape), eps)
        rows.append(idx[valid])
        cols.append(dst[valid])
        wts.append(w)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    wts = np.concatenate(wts)
    graph = sparse.csr_matrix((wts, (rows, cols)), shape=(n ** m, n ** m))
    return graph, mesh.reshape(-1, m), spacing, periodic


def ball_compactness_probe(M: ChartManifold, x0, x1, r: float, eps_bar: float, grid: int = 81) -> BallProbeReport:
    """Grid estimate of d_eps and of B+(x0, r) intersect B-(x1, r).

    Edge weights are F_eps of the edge displacement at the edge midpoint, so
    the graph distance is the length of the shortest grid polyline.  When the
    intersection touches a non-periodic boundary the result is inconclusive.
    """
    if not eps_bar > 0:
        raise ParameterError("eps_bar must be > 0")
    graph, nodes, spacing, periodic = _grid_graph(M, grid, eps_bar)

    def snap(p):
        p = M.wrap(np.asarray(p, dtype=float))
        k = int(np.argmin(np.sum((nodes - p) ** 2, axis=-1)))
        return k, float(np.sqrt(np.sum((nodes[k] - p) ** 2)))

    i0, e0 = snap(x0)
    i1, e1 = snap(x1)
    fwd = csgraph.dijkstra(graph, directed=True, indices=[i0, i1])
    bwd = csgraph.dijkstra(graph.T.tocsr(), directed=True, indices=[i0, i1])
    d01 = float(fwd[0, i1])
    d10 = float(fwd[1, i0])
    inter = (fwd[0] <= r) & (bwd[1] <= r)
    boundary = np.zeros(len(nodes), dtype=bool)
    for i, (lo, hi) in enumerate(M.bounds):
        if i in periodic:
            continue
        tol = 1e-9 * (hi - lo)
        boundary |= (nodes[:, i] <= lo + tol) | (nodes[:, i] >= hi - tol)
    reason = "ok"
    contained: bool | None = True
    inconclusive = False
    if max(e0, e1) > 1e-9 * max(spacing) + 1e-12:
        reason = f"endpoints snapped to grid (offsets {e0:.3g}, {e1:.3g})"
    if not np.isfinite(d01) or not np.isfinite(d10):
        contained, inconclusive, reason = None, True, "grid graph disconnected"
    elif np.any(inter & boundary):
        contained, inconclusive = None, True
        reason = "ball intersection reaches the domain boundary; refine domain or radius"
    return BallProbeReport(d01, d10, contained, inconclusive, reason, spacing, len(nodes), int(inter.sum()),
                           extras={"forward_from_x0": fwd[0], "backward_to_x1": bwd[1], "nodes": nodes})


def grid_distances(M: ChartManifold, points, eps: float, grid: int = 81) -> np.ndarray:
    """Pairwise grid distances ``D[i, j] = d_eps(p_i, p_j)`` between snapped points."""
    graph, nodes, _, _ = _grid_graph(M, grid, eps)
    ids = [int(np.argmin(np.sum((nodes - M.wrap(np.asarray(p, float))) ** 2, axis=-1))) for p in points]
    D = csgraph.dijkstra(graph, directed=True, indices=ids)
    return D[:, ids]
