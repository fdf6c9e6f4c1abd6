"""Discretized curves and their tabular / JSON serialization."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PARAMETRIZATIONS = ("F_eps-unit", "t-graph", "affine", "control")
FORMAT = "rkgeo-path/1"


@dataclass
class GeodesicPath:
    """Samples ``(s, x, v)`` of a curve in S (``spacetime=False``) or in S x R.

    For spacetime paths the last column of ``x`` is the time coordinate t and
    the last column of ``v`` is dt/ds.
    """

    s: np.ndarray
    x: np.ndarray
    v: np.ndarray
    parametrization: str = "affine"
    eps: float = 0.0
    spacetime: bool = False
    length_F: float = float("nan")
    length_Feps: float = float("nan")
    energy_Feps: float = float("nan")
    diagnostics: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    truncated: str | None = None

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float)
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        self.v = np.atleast_2d(np.asarray(self.v, dtype=float))
        if self.parametrization not in PARAMETRIZATIONS:
            raise ValueError(f"unknown parametrization {self.parametrization!r}")
        if not (len(self.s) == len(self.x) == len(self.v)):
            raise ValueError("s, x and v must have the same number of samples")
        if len(self.s) > 1 and np.any(np.diff(self.s) <= 0):
            raise ValueError("samples must be strictly increasing in s")

    def __len__(self):
        return len(self.s)

    @property
    def space_dim(self) -> int:
        return self.x.shape[1] - (1 if self.spacetime else 0)

    @property
    def spatial_x(self) -> np.ndarray:
        return self.x[:, : self.space_dim]

    @property
    def spatial_v(self) -> np.ndarray:
        return self.v[:, : self.space_dim]

    @property
    def start(self) -> np.ndarray:
        return self.spatial_x[0]

    @property
    def end(self) -> np.ndarray:
        return self.spatial_x[-1]

    def columns(self) -> list[str]:
        m = self.space_dim
        xs = [f"x{i + 1}" for i in range(m)]
        vs = [f"v{i + 1}" for i in range(m)]
        if self.spacetime:
            xs.append("t")
            vs.append("tdot")
        return ["s"] + xs + vs + sorted(self.diagnostics)

    # -- tabular ----------------------------------------------------------

    def to_csv(self, fh=None) -> str | None:
        cols = self.columns()
        diag = [np.asarray(self.diagnostics[k], dtype=float) for k in sorted(self.diagnostics)]
        out = fh if fh is not None else io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(cols)
        for k in range(len(self)):
            row = [self.s[k], *self.x[k], *self.v[k], *(d[k] for d in diag)]
            writer.writerow([repr(float(a)) for a in row])
        if fh is None:
            return out.getvalue()
        return None

    @classmethod
    def from_csv(cls, text: str, parametrization="affine", eps=0.0) -> "GeodesicPath":
        rows = list(csv.reader(io.StringIO(text)))
        header, data = rows[0], np.array([[float(a) for a in r] for r in rows[1:]])
        spacetime = "t" in header
        m = sum(1 for h in header if h.startswith("x"))
        n_x = m + (1 if spacetime else 0)
        x = data[:, 1 : 1 + n_x]
        v = data[:, 1 + n_x : 1 + 2 * n_x]
        diag = {h: data[:, j] for j, h in enumerate(header) if j >= 1 + 2 * n_x}
        return cls(data[:, 0], x, v, parametrization, eps, spacetime, diagnostics=diag)

    # -- structured -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "parametrization": self.parametrization,
            "eps": self.eps,
            "spacetime": self.spacetime,
            "length_F": _num(self.length_F),
            "length_Feps": _num(self.length_Feps),
            "energy_Feps": _num(self.energy_Feps),
            "truncated": self.truncated,
            "s": self.s.tolist(),
            "x": self.x.tolist(),
            "v": self.v.tolist(),
            "diagnostics": {k: np.asarray(v, dtype=float).tolist() for k, v in sorted(self.diagnostics.items())},
            "meta": _jsonable(self.meta),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GeodesicPath":
        def f(v):
            return float("nan") if v is None else float(v)

        return cls(
            d["s"], d["x"], d["v"], d["parametrization"], d["eps"], d["spacetime"],
            f(d.get("length_F")), f(d.get("length_Feps")), f(d.get("energy_Feps")),
            {k: np.asarray(v) for k, v in d.get("diagnostics", {}).items()},
            dict(d.get("meta", {})), d.get("truncated"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def write(self, path: Path):
        path = Path(path)
        with open(path, "w", newline="") as fh:
            if path.suffix == ".json":
                fh.write(self.to_json())
            else:
                self.to_csv(fh)


def _num(v):
    v = float(v)
    return v if np.isfinite(v) else None


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return _num(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def resample(path: GeodesicPath, n: int) -> np.ndarray:
    """Spatial points at ``n`` equally spaced normalized parameters (linear interp)."""
    u = (path.s - path.s[0]) / (path.s[-1] - path.s[0])
    q = np.linspace(0.0, 1.0, n)
    return np.stack([np.interp(q, u, path.spatial_x[:, i]) for i in range(path.space_dim)], axis=-1)
