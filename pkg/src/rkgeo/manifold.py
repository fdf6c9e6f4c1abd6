"""Chart manifolds carrying a Riemannian metric g0, a one-form omega and a
nonnegative function Lambda.

Every field is a :class:`~rkgeo.expr.ScalarFieldExpr`; derivatives come from
forward-mode evaluation of the expression trees.  Topology is handled by
coordinate identifications only (``cylinder``: first coordinate is an angle,
``torus``: first two are angles).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, DomainError, NumericalError, UnsupportedWindError
from .expr import ScalarFieldExpr

TOPOLOGIES = ("plane", "cylinder", "torus", "bounded-box")
TWO_PI = 2.0 * np.pi
DOMAIN_SLACK = 1e-9


def default_coords(dim: int) -> tuple[str, ...]:
    if dim <= 3:
        return ("x", "y", "z")[:dim]
    return tuple(f"x{i + 1}" for i in range(dim))


@dataclass(frozen=True)
class FieldData:
    """Field values and first derivatives at one or many points.

    Derivative index comes first: ``dg0[..., k, i, j] = d_k g0_ij`` and
    ``domega[..., k, i] = d_k omega_i``.
    """

    g0: np.ndarray
    dg0: np.ndarray
    omega: np.ndarray
    domega: np.ndarray
    lam: np.ndarray
    dlam: np.ndarray


@dataclass(frozen=True)
class TangentSample:
    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))


@dataclass(frozen=True, eq=False)
class ChartManifold:
    dim: int
    g0: tuple  # dim x dim tuple of ScalarFieldExpr, symmetric
    omega: tuple  # dim ScalarFieldExpr
    lam: ScalarFieldExpr
    topology: str = "plane"
    bounds: np.ndarray = None
    name: str = "custom"
    coords: tuple = ()
    _const: FieldData | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.dim < 2:
            raise ConfigError(f"dimension must be >= 2, got {self.dim}")
        if self.topology not in TOPOLOGIES:
            raise ConfigError(f"unknown topology {self.topology!r}; expected one of {TOPOLOGIES}")
        if self.topology == "torus" and self.dim < 2:
            raise ConfigError("torus topology needs two angular coordinates")
        if not self.coords:
            object.__setattr__(self, "coords", default_coords(self.dim))
        b = np.asarray(self.bounds if self.bounds is not None else [[-10.0, 10.0]] * self.dim, dtype=float)
        if b.shape != (self.dim, 2) or np.any(b[:, 1] <= b[:, 0]):
            raise ConfigError(f"domain bounds must be {self.dim} increasing [lo, hi] pairs")
        for i in self.periodic_axes:
            b[i] = (b[i, 0], b[i, 0] + TWO_PI)
        b.setflags(write=False)
        object.__setattr__(self, "bounds", b)
        if len(self.g0) != self.dim or any(len(r) != self.dim for r in self.g0):
            raise ConfigError("g0 must be a dim x dim matrix of expressions")
        if len(self.omega) != self.dim:
            raise ConfigError("omega must have dim components")
        exprs = self.expressions()
        if all(e.is_constant for e in exprs):
            object.__setattr__(self, "_const", self._compute_fields(np.zeros(self.dim)))

    def expressions(self) -> list[ScalarFieldExpr]:
        out = [self.g0[i][j] for i in range(self.dim) for j in range(i, self.dim)]
        return out + list(self.omega) + [self.lam]

    @property
    def is_constant(self) -> bool:
        return self._const is not None

    @property
    def periodic_axes(self) -> tuple[int, ...]:
        return {"cylinder": (0,), "torus": (0, 1)}.get(self.topology, ())

    # -- field access -----------------------------------------------------

    def _plan(self):
        """Template field data at a single point plus the non-constant entries to fill."""
        plan = self.__dict__.get("_plan_cache")
        if plan is not None:
            return plan
        m = self.dim
        g = np.zeros((m, m))
        dg = np.zeros((m, m, m))
        om = np.zeros(m)
        dom = np.zeros((m, m))
        todo = []
        for i in range(m):
            for j in range(i, m):
                e = self.g0[i][j]
                if e.is_constant:
                    g[i, j] = g[j, i] = e.ast.value
                else:
                    todo.append(("g", i, j, e))
        for i in range(m):
            e = self.omega[i]
            if e.is_constant:
                om[i] = e.ast.value
            else:
                todo.append(("w", i, i, e))
        lam = float(self.lam.ast.value) if self.lam.is_constant else 0.0
        if not self.lam.is_constant:
            todo.append(("l", 0, 0, self.lam))
        plan = (g, dg, om, dom, lam, todo)
        object.__setattr__(self, "_plan_cache", plan)
        return plan

    def _point_fields(self, x):
        g0, dg0, om0, dom0, lam0, todo = self._plan()
        g, dg, om, dom = g0.copy(), dg0.copy(), om0.copy(), dom0.copy()
        lam, dlam = lam0, np.zeros(self.dim)
        xs = x.tolist()
        with np.errstate(all="ignore"):
            for kind, i, j, e in todo:
                v, d = e.point_value_and_grad(xs)
                if kind == "g":
                    g[i, j] = g[j, i] = v
                    dg[:, i, j] = dg[:, j, i] = d
                elif kind == "w":
                    om[i] = v
                    dom[:, i] = d
                else:
                    lam, dlam = v, np.array(d, dtype=float)
        return FieldData(g, dg, om, dom, np.float64(lam), dlam)

    def _compute_fields(self, x):
        m = self.dim
        if x.ndim == 1:
            return self._point_fields(x)
        shape = x.shape[:-1]
        g0, dg0, om0, dom0, lam0, todo = self._plan()
        g = np.broadcast_to(g0, shape + (m, m)).copy()
        dg = np.broadcast_to(dg0, shape + (m, m, m)).copy()
        om = np.broadcast_to(om0, shape + (m,)).copy()
        dom = np.broadcast_to(dom0, shape + (m, m)).copy()
        lam = np.full(shape, lam0)
        dlam = np.zeros(shape + (m,))
        for kind, i, j, e in todo:
            v, d = e.value_and_grad(x)
            if kind == "g":
                g[..., i, j] = g[..., j, i] = v
                dg[..., :, i, j] = dg[..., :, j, i] = d
            elif kind == "w":
                om[..., i] = v
                dom[..., :, i] = d
            else:
                lam, dlam = np.asarray(v, dtype=float) + np.zeros(shape), d
        return FieldData(g, dg, om, dom, lam, dlam)

    def fields(self, x) -> FieldData:
        """Field values and first derivatives at ``x`` (shape ``(..., m)``).

        No domain check; callers validate points where the contract needs it.
        """
        x = np.asarray(x, dtype=float)
        if self._const is not None:
            if x.ndim == 1:
                return self._const
            c = self._const
            shape = x.shape[:-1]
            return FieldData(*(np.broadcast_to(a, shape + a.shape) for a in
                               (c.g0, c.dg0, c.omega, c.domega, c.lam, c.dlam)))
        return self._compute_fields(x)

    def g0_matrix(self, x) -> np.ndarray:
        return self.fields(x).g0

    def wrap(self, x) -> np.ndarray:
        """Reduce periodic coordinates into the fundamental domain."""
        x = np.array(x, dtype=float)
        for i in self.periodic_axes:
            lo = self.bounds[i, 0]
            x[..., i] = lo + np.mod(x[..., i] - lo, TWO_PI)
        return x

    def in_domain(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim or not np.all(np.isfinite(x)):
            return False
        xw = self.wrap(x)
        lo = self.bounds[:, 0] - DOMAIN_SLACK
        hi = self.bounds[:, 1] + DOMAIN_SLACK
        return bool(np.all((xw >= lo) & (xw <= hi)))

    def check_domain(self, x):
        if not self.in_domain(x):
            raise DomainError(f"point {np.asarray(x).tolist()} outside domain bounds {self.bounds.tolist()} of {self.name}")

    def sample_points(self, n: int, rng: np.random.Generator) -> np.ndarray:
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        return lo + (hi - lo) * rng.random((n, self.dim))

    def lattice(self, per_axis: int) -> np.ndarray:
        axes = [np.linspace(lo, hi, per_axis) for lo, hi in self.bounds]
        grid = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grid], axis=-1)


def _as_vec(a):
    return np.asarray(a, dtype=float)


# ---------------------------------------------------------------------------
# Pointwise operations


def eval_g0(M: ChartManifold, x, u, w) -> float:
    M.check_domain(x)
    g = M.fields(x).g0
    return float(_as_vec(u) @ g @ _as_vec(w))


def _solve_metric(g, rhs, what="g0"):
    cond = np.max(np.linalg.cond(g))
    if not np.isfinite(cond) or cond > 1e14:
        raise NumericalError(f"{what} is singular (condition number {cond:.3e})", condition=cond)
    return np.linalg.solve(g, rhs)


def christoffel_from(g, dg):
    """Christoffel symbols ``Gamma[k, i, j]`` from a metric and its derivatives.

    ``dg[l, i, j] = d_l g_ij``.  Works for any signature.
    """
    # first kind: Gamma_{l i j} = 1/2 (d_i g_lj + d_j g_li - d_l g_ij)
    first = 0.5 * (np.einsum("...ilj->...lij", dg) + np.einsum("...jli->...lij", dg) - dg)
    n = g.shape[-1]
    flat_first = first.reshape(first.shape[:-3] + (n, n * n))
    return _solve_metric(g, flat_first, "metric").reshape(first.shape)


def christoffel_g0(M: ChartManifold, x) -> np.ndarray:
    """Levi-Civita symbols of g0 at ``x``: ``out[k, i, j] = Gamma^k_ij``."""
    M.check_domain(x)
    f = M.fields(x)
    return christoffel_from(f.g0, f.dg0)


def d_omega(M: ChartManifold, x, u, w) -> float:
    """Exterior derivative ``d omega(u, w)``."""
    M.check_domain(x)
    dom = M.fields(x).domega  # [k, i] = d_k omega_i
    curl = dom - dom.T  # curl[k, i] = d_k omega_i - d_i omega_k
    return float(_as_vec(u) @ curl @ _as_vec(w))


def sharp(M: ChartManifold, x, alpha) -> np.ndarray:
    M.check_domain(x)
    return _solve_metric(M.fields(x).g0, _as_vec(alpha))


def flat(M: ChartManifold, x, v) -> np.ndarray:
    M.check_domain(x)
    return M.fields(x).g0 @ _as_vec(v)


def grad_lambda(M: ChartManifold, x) -> np.ndarray:
    M.check_domain(x)
    f = M.fields(x)
    return _solve_metric(f.g0, f.dlam)


def omega_norm(M: ChartManifold, x) -> np.ndarray:
    """g0-norm of omega; vectorized over leading axes of ``x``."""
    f = M.fields(x)
    osharp = np.linalg.solve(f.g0, f.omega[..., None])[..., 0]
    return np.sqrt(np.einsum("...i,...i->...", f.omega, osharp))


# ---------------------------------------------------------------------------
# Construction helpers


def build_manifold(g0, omega, lam, *, topology="plane", bounds=None, name="custom", coords=None):
    """Build a manifold from expression strings/numbers.

    ``g0`` is a square nested list; ``omega`` a list; ``lam`` a scalar.
    """
    dim = len(omega)
    coords = tuple(coords) if coords else default_coords(dim)

    def p(e):
        return e if isinstance(e, ScalarFieldExpr) else ScalarFieldExpr.parse(e, coords)

    G = tuple(tuple(p(g0[i][j]) for j in range(dim)) for i in range(dim))
    for i in range(dim):
        for j in range(i + 1, dim):
            if str(G[i][j]) != str(G[j][i]):
                raise ConfigError(f"g0 is not symmetric at ({i}, {j}): {G[i][j]} vs {G[j][i]}")
    return ChartManifold(dim, G, tuple(p(o) for o in omega), p(lam), topology,
                         bounds, name, coords)


def from_zermelo(g0, wind, *, topology="plane", bounds=None, name="zermelo", coords=None,
                 n_check=400, seed=0):
    """Manifold for Zermelo navigation with wind ``W``: omega = -g0(., W),
    Lambda = 1 - g0(W, W).

    Raises :class:`UnsupportedWindError` if ``g0(W, W) > 1`` at a sampled point.
    """
    dim = len(wind)
    coords = tuple(coords) if coords else default_coords(dim)

    def p(e):
        return e if isinstance(e, ScalarFieldExpr) else ScalarFieldExpr.parse(e, coords)

    G = [[p(g0[i][j]) for j in range(dim)] for i in range(dim)]
    W = [p(w) for w in wind]
    omega = []
    for i in range(dim):
        acc = ScalarFieldExpr.constant(0.0, coords)
        for j in range(dim):
            acc = acc + G[i][j] * W[j]
        omega.append(-acc)
    norm2 = ScalarFieldExpr.constant(0.0, coords)
    for i in range(dim):
        for j in range(dim):
            norm2 = norm2 + W[i] * G[i][j] * W[j]
    lam = 1.0 - norm2
    M = ChartManifold(dim, tuple(tuple(r) for r in G), tuple(omega), lam, topology, bounds, name, coords)
    pts = np.concatenate([M.lattice(max(2, int(round(n_check ** (1.0 / dim))))),
                          M.sample_points(n_check, np.random.default_rng(seed))])
    wn = norm2(pts)
    if np.any(wn > 1.0 + 1e-12):
        k = int(np.argmax(wn))
        raise UnsupportedWindError(
            f"wind norm^2 {wn[k]:.6g} > 1 at {pts[k].tolist()}; strong wind is not supported")
    return M


def wind_of(M: ChartManifold, x) -> np.ndarray:
    """Recover the Zermelo wind ``W = -omega^sharp``."""
    return -sharp(M, x, M.fields(x).omega)


# ---------------------------------------------------------------------------
# Catalog

_PLANE_BOX = [[-4.0, 4.0], [-4.0, 4.0]]


def catalog(name: str, **params) -> ChartManifold:
    """Built-in manifolds.

    ``euclidean-plane``, ``constant-wind-plane(w)``, ``flat-cylinder-wind(w)``,
    ``kropina-plane`` and ``heisenberg``.
    """
    I2 = [["1", "0"], ["0", "1"]]
    if name == "euclidean-plane":
        return build_manifold(I2, ["0", "0"], "1", bounds=params.get("bounds", _PLANE_BOX), name=name)
    if name == "constant-wind-plane":
        w = float(params.get("w", 0.5))
        return from_zermelo(I2, [w, 0.0], bounds=params.get("bounds", _PLANE_BOX), name=name)
    if name == "flat-cylinder-wind":
        w = float(params.get("w", 0.5))
        bounds = params.get("bounds", [[0.0, 2 * np.pi], [-4.0, 4.0]])
        return from_zermelo(I2, [w, 0.0], topology="cylinder", bounds=bounds, name=name)
    if name == "kropina-plane":
        return build_manifold(I2, ["-1", "0"], "0", bounds=params.get("bounds", _PLANE_BOX), name=name)
    if name == "heisenberg":
        I3 = [["1", "0", "0"], ["0", "1", "0"], ["0", "0", "1"]]
        return build_manifold(I3, ["0.5*y", "-0.5*x", "1"], "0",
                              bounds=params.get("bounds", [[-1.0, 1.0]] * 3), name=name)
    raise ConfigError(f"unknown catalog manifold {name!r}; known: {', '.join(CATALOG_NAMES)}")


CATALOG_NAMES = ("euclidean-plane", "constant-wind-plane", "flat-cylinder-wind", "kropina-plane", "heisenberg")


def from_config(cfg: Mapping) -> ChartManifold:
    """Manifold from a config mapping.

    Either ``{catalog: name, params: {...}}`` or inline fields
    ``dim, coordinates, topology, bounds, g0`` plus ``omega`` and ``lambda``
    or a Zermelo ``wind``.
    """
    if not isinstance(cfg, Mapping):
        raise ConfigError("manifold section must be a mapping")
    if "catalog" in cfg:
        params = dict(cfg.get("params") or {})
        return catalog(str(cfg["catalog"]), **params)
    try:
        dim = int(cfg["dim"])
    except KeyError:
        raise ConfigError("inline manifold needs 'dim' (or use 'catalog')") from None
    coords = cfg.get("coordinates") or default_coords(dim)
    if len(coords) != dim:
        raise ConfigError(f"expected {dim} coordinate names, got {len(coords)}")
    g0 = cfg.get("g0")
    if g0 is None:
        g0 = [["1" if i == j else "0" for j in range(dim)] for i in range(dim)]
    kw = dict(topology=cfg.get("topology", "plane"), bounds=cfg.get("bounds"),
              name=cfg.get("name", "custom"), coords=coords)
    if "wind" in cfg:
        return from_zermelo(g0, cfg["wind"], **kw)
    if "omega" not in cfg or "lambda" not in cfg:
        raise ConfigError("inline manifold needs 'omega' and 'lambda' (or 'wind')")
    return build_manifold(g0, cfg["omega"], cfg["lambda"], **kw)


# ---------------------------------------------------------------------------
# Sampled assumption checks


@dataclass
class AssumptionCheck:
    name: str
    passed: bool
    worst: float
    detail: str = ""


def check_assumptions(M: ChartManifold, n: int = 1000, seed: int = 0) -> list[AssumptionCheck]:
    """Sample g0 positivity, Lambda >= 0, the Lorentz condition and omega != 0."""
    rng = np.random.default_rng(seed)
    pts = np.concatenate([M.lattice(3), M.sample_points(n, rng)])
    f = M.fields(pts)
    eig_min = np.linalg.eigvalsh(f.g0)[..., 0]
    lam = np.broadcast_to(f.lam, pts.shape[:1])
    on = omega_norm(M, pts)
    lorentz = lam + on ** 2
    return [
        AssumptionCheck("g0 positive definite", bool(np.all(eig_min > 0)), float(eig_min.min()),
                        "min eigenvalue of g0"),
        AssumptionCheck("Lambda >= 0", bool(np.all(lam >= 0)), float(lam.min()), "min Lambda"),
        AssumptionCheck("Lorentz condition", bool(np.all(lorentz > 0)), float(lorentz.min()),
                        "min Lambda + |omega|^2"),
        AssumptionCheck("omega != 0", bool(np.all(on > 0)), float(on.min()), "min |omega|"),
    ]
