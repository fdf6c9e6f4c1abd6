"""Command-line drivers.

    rkgeo describe --config m.yaml
    rkgeo connect  --config c.yaml --out results/ --k-max 3
    rkgeo verify   --seed 0
    rkgeo geodesic | zermelo | reach --config ...

Exit codes: 0 success, 2 config error, 3 hypothesis violation, 4 solver
failure, 5 property failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .bvp import ShootingProblem, continue_eps, default_schedule, winding_classes
from .control import build_frame, drift_flow, energy_bound_check, integrate_control, reach
from .errors import (ConfigError, ExprSyntaxError, HypothesisViolation, NonintegrabilityError, ReachFailure, RKGeoError,
                     UnsupportedWindError)
from .finsler import ball_compactness_probe, finsler_values
from .geodesics import integrate_geodesic
from .manifold import catalog, check_assumptions, from_config, from_zermelo
from .paths import _jsonable
from .spacetime import SpacetimeState
from .verify import VerifyConfig, run_suite

EXIT_OK, EXIT_CONFIG, EXIT_HYPOTHESIS, EXIT_SOLVER, EXIT_PROPERTY = 0, 2, 3, 4, 5
DOC_FORMAT = "rkgeo-result/1"


@dataclass
class RunConfig:
    command: str
    manifold: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    out: Path | None = None
    seed: int = 0
    tol: float | None = None
    eps_schedule: list | None = None
    k_max: int | None = None
    grid: int | None = None
    source: str | None = None

    def validate(self):
        if self.tol is not None and not self.tol > 0:
            raise ConfigError(f"tolerance must be > 0, got {self.tol}")
        if self.eps_schedule is not None:
            s = self.eps_schedule
            if not s or any(e <= 0 for e in s) or any(b >= a for a, b in zip(s, s[1:])):
                raise ConfigError("eps schedule must be strictly decreasing positive values")
        if self.k_max is not None and self.k_max < 0:
            raise ConfigError("k-max must be >= 0")
        if self.grid is not None and self.grid < 3:
            raise ConfigError("grid must be >= 3")
        return self


# ---------------------------------------------------------------------------
# Config loading


def read_config(path: str | None) -> str | None:
    if path is None:
        return None
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return text


def load_document(text: str | None) -> dict:
    if text is None:
        return {}
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark else None
        col = mark.column + 1 if mark else None
        raise ConfigError(f"malformed config: {getattr(exc, 'problem', exc)}", line, col) from None
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping")
    return doc


def _schedule(text):
    try:
        return [float(a) for a in text.split(",") if a.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse eps schedule {text!r}") from None


def build_run_config(args) -> RunConfig:
    text = read_config(args.config)
    doc = load_document(text)
    man = doc.get("manifold", {})
    params = {k: v for k, v in doc.items() if k not in ("manifold", "seed", "tol", "eps_schedule", "k_max",
                                                         "grid", "out")}
    rc = RunConfig(
        command=args.command,
        manifold=man,
        params=params,
        out=Path(args.out) if args.out else (Path(doc["out"]) if doc.get("out") else None),
        seed=args.seed if args.seed is not None else int(doc.get("seed", 0)),
        tol=args.tol if args.tol is not None else (float(doc["tol"]) if "tol" in doc else None),
        eps_schedule=(_schedule(args.eps_schedule) if args.eps_schedule
                      else ([float(e) for e in doc["eps_schedule"]] if "eps_schedule" in doc else None)),
        k_max=args.k_max if args.k_max is not None else (int(doc["k_max"]) if "k_max" in doc else None),
        grid=args.grid if args.grid is not None else (int(doc["grid"]) if "grid" in doc else None),
        source=text,
    )
    return rc.validate()


def _vec(params, key, default=None):
    v = params.get(key, default)
    if v is None:
        raise ConfigError(f"missing parameter {key!r}")
    try:
        return np.asarray([float(a) for a in v], dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"parameter {key!r} must be a list of numbers") from None


def _scalar_nodes(node):
    if isinstance(node, yaml.ScalarNode):
        yield node
    elif isinstance(node, yaml.SequenceNode):
        for n in node.value:
            yield from _scalar_nodes(n)
    elif isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            yield from _scalar_nodes(k)
            yield from _scalar_nodes(v)


def locate_expression(text: str | None, exc: ExprSyntaxError) -> ExprSyntaxError:
    """Attach the config line/column of the scalar holding a bad expression."""
    if text is None or exc.line is not None:
        return exc
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return exc
    for node in _scalar_nodes(root) if root is not None else ():
        if repr(node.value) in str(exc):
            col = node.start_mark.column + 1 + (1 if node.style in ("'", '"') else 0)
            col += (exc.column or 1) - 1
            msg = str(exc).rsplit(" (column", 1)[0]
            return ExprSyntaxError(msg, node.start_mark.line + 1, col)
    return exc


def _manifold(rc: RunConfig, default=None):
    if not rc.manifold:
        if default is None:
            raise ConfigError("config needs a 'manifold' section")
        return catalog(default)
    return from_config(rc.manifold)


# ---------------------------------------------------------------------------
# Output


def dumps(doc) -> str:
    return json.dumps(_jsonable(doc), sort_keys=True, indent=2) + "\n"


def emit(rc: RunConfig, doc: dict, paths: dict | None = None, name: str = "result.json"):
    """Write the document (and tabular paths) under ``--out``, or print it."""
    doc = {"format": DOC_FORMAT, "command": rc.command, "version": __version__, **doc}
    if rc.out is None:
        sys.stdout.write(dumps(doc))
        return
    rc.out.mkdir(parents=True, exist_ok=True)
    for fname, path in (paths or {}).items():
        (rc.out / fname).parent.mkdir(parents=True, exist_ok=True)
        path.write(rc.out / fname)
    (rc.out / name).write_text(dumps(doc))
    print(f"wrote {rc.out / name}")


def _table(rows):
    width = max(len(r[0]) for r in rows)
    for name, ok, detail in rows:
        status = "PASS" if ok else ("FAIL" if ok is False else "n/a ")
        print(f"  {name:<{width}}  {status}  {detail}")


# ---------------------------------------------------------------------------
# Commands


def cmd_describe(rc: RunConfig) -> int:
    M = _manifold(rc)
    checks = check_assumptions(M, n=1000, seed=rc.seed)
    rows = [(c.name, c.passed, f"{c.detail} = {c.worst:.6g}") for c in checks]
    doc = {"manifold": {"name": M.name, "dim": M.dim, "topology": M.topology, "bounds": M.bounds.tolist(),
                        "coordinates": list(M.coords)},
           "checks": {c.name: {"passed": c.passed, "worst": c.worst, "detail": c.detail} for c in checks}}
    try:
        fr = build_frame(M, seed=rc.seed)
        rows.append(("nonintegrability", True, f"min |omega ^ domega| = {fr.nonintegrability_min:.6g}"))
        rows.append(("Omega (sup |omega|)", None, f"{fr.Omega:.6g}"))
        rows.append(("lambda (rescaled)", fr.lam > 4 * (M.dim + 3) * fr.Omega,
                     f"{fr.lam:.6g} vs 4(m+3)Omega = {4 * (M.dim + 3) * fr.Omega:.6g}; C^2 = {fr.C ** 2:.6g}"))
        doc["checks"]["nonintegrability"] = {"passed": True, "worst": fr.nonintegrability_min}
        doc["frame"] = fr.to_dict()
    except (NonintegrabilityError, HypothesisViolation) as exc:
        rows.append(("nonintegrability", False, str(exc)))
        doc["checks"]["nonintegrability"] = {"passed": False, "detail": str(exc)}
    if M.dim == 2:
        lo, hi = M.bounds[:, 0], M.bounds[:, 1]
        c = 0.5 * (lo + hi)
        probe = rc.params.get("probe", {})
        x0 = _vec(probe, "x0", c.tolist())
        x1 = _vec(probe, "x1", (c + [0.1 * (hi[0] - lo[0]), 0.0]).tolist())
        r = float(probe.get("r", 0.25 * float(np.min(hi - lo))))
        rep = ball_compactness_probe(M, x0, x1, r, float(probe.get("eps_bar", 0.1)), rc.grid or 41)
        rows.append(("ball compactness probe", rep.contained,
                     f"{rep.reason}; d(x0,x1) = {rep.d_forward:.6g}, d(x1,x0) = {rep.d_backward:.6g}"))
        doc["ball_probe"] = rep.to_dict()
    print(f"{M.name} (dim {M.dim}, {M.topology})")
    _table(rows)
    if rc.out is not None:
        emit(rc, doc, name="describe.json")
    return EXIT_OK


def _solution_entry(trace, hint):
    last = trace.paths[-1] if trace.paths else None
    best = trace.limit_path if trace.limit_path is not None else last
    entry = {
        "winding": list(hint),
        "converged": trace.converged,
        "diverged": trace.diverged,
        "reason": trace.reason,
        "failure": trace.failure,
        "eps": trace.eps_sequence[-1] if trace.eps_sequence else None,
        "length_eps": last.length_Feps if last else None,
        "energy_eps": last.energy_Feps if last else None,
        "length_F": trace.limit_length if trace.converged else None,
        "arrival_time": best.meta.get("arrival_time") if best else None,
        "endpoint_error": last.meta.get("endpoint_error") if last else None,
        "pregeodesic_residual": last.meta.get("pregeodesic_residual") if last else None,
        "limit_residual": trace.limit_residual if trace.converged else None,
        "trace": trace.to_dict(),
    }
    return entry, best


def _connect(rc: RunConfig, M, x0, x1) -> int:
    sched = rc.eps_schedule or default_schedule()
    tol = rc.tol or 1e-5
    e_cap = float(rc.params.get("e_cap", 1e3))
    t0 = float(rc.params.get("t0", 0.0))
    classes = winding_classes(M, rc.k_max if rc.k_max is not None else 3) if M.periodic_axes else [()]
    entries, paths = [], {}
    for hint in classes:
        problem = ShootingProblem(M, x0, x1, sched[0], hint, t0)
        try:
            trace = continue_eps(problem, sched, tol=tol, E_cap=e_cap)
        except HypothesisViolation as exc:
            emit(rc, {"status": "hypothesis-violation", "message": str(exc)}, name="solutions.json")
            print(f"hypothesis violation: {exc}", file=sys.stderr)
            return EXIT_HYPOTHESIS
        entry, best = _solution_entry(trace, hint)
        entries.append((entry, best))
    entries.sort(key=lambda e: (not e[0]["converged"], e[0]["length_eps"] if e[0]["length_eps"] is not None
                                else np.inf, e[0]["winding"]))
    docs = []
    for i, (entry, best) in enumerate(entries):
        if best is not None:
            fname = f"paths/solution_{i:02d}.csv"
            entry["path_file"] = fname
            paths[fname] = best
        docs.append(entry)
    n_ok = sum(e["converged"] for e in docs)
    doc = {"manifold": M.name, "x0": x0.tolist(), "x1": x1.tolist(), "eps_schedule": sched, "tol": tol,
           "e_cap": e_cap, "n_converged": n_ok, "solutions": docs,
           "status": "ok" if n_ok else "solver-failure"}
    emit(rc, doc, paths, name="solutions.json")
    return EXIT_OK if n_ok else EXIT_SOLVER


def cmd_connect(rc: RunConfig) -> int:
    M = _manifold(rc)
    return _connect(rc, M, _vec(rc.params, "x0"), _vec(rc.params, "x1"))


def cmd_zermelo(rc: RunConfig) -> int:
    p = rc.params
    if "wind" not in p and "wind" not in rc.manifold:
        raise ConfigError("zermelo needs a 'wind' entry")
    src = dict(rc.manifold)
    src.setdefault("wind", p.get("wind"))
    dim = int(src.get("dim", len(src["wind"])))
    g0 = src.get("g0") or [["1" if i == j else "0" for j in range(dim)] for i in range(dim)]
    M = from_zermelo(g0, src["wind"], topology=src.get("topology", "plane"), bounds=src.get("bounds"),
                     name=src.get("name", "zermelo"), coords=src.get("coordinates"))
    return _connect(rc, M, _vec(p, "x0"), _vec(p, "x1"))


def cmd_geodesic(rc: RunConfig) -> int:
    M = _manifold(rc)
    p = rc.params
    x0, v0 = _vec(p, "x0"), _vec(p, "v0")
    eps = float(p.get("eps", 0.0))
    tdot = p.get("tdot")
    if tdot is None:
        tdot = float(finsler_values(M, x0, v0, eps))
        if not np.isfinite(tdot):
            raise HypothesisViolation("v0 is not admissible, so no future lightlike lift exists; give 'tdot'")
    state = SpacetimeState(x0, float(p.get("t0", 0.0)), v0, float(tdot))
    path = integrate_geodesic(M, state, eps, float(p.get("s_max", 1.0)), rc.tol or 1e-9,
                              n_samples=int(p.get("n_samples", 201)))
    doc = {"manifold": M.name, "eps": eps, "initial": {"x": x0.tolist(), "v": v0.tolist(), "tdot": float(tdot)},
           "truncated": path.truncated, "meta": path.meta, "path_file": "geodesic.csv"}
    emit(rc, doc, {"geodesic.csv": path}, name="geodesic.json")
    return EXIT_OK


def cmd_reach(rc: RunConfig) -> int:
    M = _manifold(rc, default="heisenberg")
    p = rc.params
    frame = build_frame(M, seed=rc.seed)
    x0 = _vec(p, "x0", [0.0] * M.dim)
    x1 = drift_flow(frame, x0) if p.get("target") == "drift" else _vec(p, "x1")
    tol = rc.tol or 1e-4
    try:
        res = reach(frame, x0, x1, tol=tol, budget=int(p.get("budget", 4000)),
                    n_intervals=int(p.get("n_intervals", 4)), seed=rc.seed)
    except ReachFailure as exc:
        emit(rc, {"status": "solver-failure", "message": str(exc), "best_distance": exc.best_distance},
             name="reach.json")
        print(str(exc), file=sys.stderr)
        return EXIT_SOLVER
    path = integrate_control(frame, x0, res.signal)
    doc = {"status": "ok", "manifold": M.name, "x0": x0.tolist(), "x1": x1.tolist(), "distance": res.distance,
           "starts": res.starts, "evaluations": res.evaluations, "signal": res.signal.to_dict(),
           "frame": frame.to_dict(), "energy_bound": energy_bound_check(frame, res.signal, path),
           "path_file": "control_path.csv"}
    emit(rc, doc, {"control_path.csv": path}, name="reach.json")
    return EXIT_OK


def cmd_verify(rc: RunConfig) -> int:
    p = rc.params
    cfg = VerifyConfig(seed=rc.seed, tol=rc.tol or 1e-9,
                       n_samples=int(p.get("n_samples", 2000)), n_geodesics=int(p.get("n_geodesics", 10)),
                       n_signals=int(p.get("n_signals", 100)),
                       inject_perturbation=bool(p.get("inject_perturbation", False)))
    if "manifolds" in p:
        cfg.manifolds = list(p["manifolds"])
    elif rc.manifold:
        cfg.manifolds = [from_config(rc.manifold)]
    rep = run_suite(cfg)
    for name, r in rep["properties"].items():
        extra = f", tolerance-bound {r['tolerance_bound']}" if r["tolerance_bound"] else ""
        print(f"  {name:<22} checked {r['checked']:>6}  failed {r['failed']:>5}{extra}", file=sys.stderr)
    emit(rc, rep, name="verify.json")
    return EXIT_OK if rep["passed"] else EXIT_PROPERTY


COMMANDS = {"describe": cmd_describe, "connect": cmd_connect, "verify": cmd_verify, "reach": cmd_reach,
            "geodesic": cmd_geodesic, "zermelo": cmd_zermelo}


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rkgeo", description="Geodesics of Randers-Kropina metrics")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="YAML or JSON run configuration")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", help="output directory (default: print the document)")
    ap.add_argument("--tol", type=float)
    ap.add_argument("--eps-schedule", help="comma separated, strictly decreasing")
    ap.add_argument("--k-max", type=int)
    ap.add_argument("--grid", type=int)
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    rc = None
    try:
        rc = build_run_config(args)
        try:
            return COMMANDS[args.command](rc)
        except ExprSyntaxError as exc:
            raise locate_expression(rc.source, exc) from None
    except (ConfigError, UnsupportedWindError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HypothesisViolation as exc:
        print(f"hypothesis violation: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except RKGeoError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
