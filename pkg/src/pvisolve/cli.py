"""Command-line front end: ``pvisolve <command> CONFIG [options]``.

Exit codes: 0 success, 1 domain or validation failure, 2 configuration
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
import time
import warnings

import numpy as np
import scipy

from . import __version__
from .bsvi import SolverConfig, apriori_bounds_report, penalization_sweep, solve_backward
from .config import load_config
from .exceptions import ConfigError, DomainError, PVIError
from .feynman_kac import continuity_report, domain_membership_report, solve_grid
from .oracles import compare, cosine_coefficients, neumann_heat_series, solve_penalized_fd
from .problem import IntervalDomain
from .sde import TimeGrid, simulate, write_paths_csv, write_paths_npz
from .validation import check_compatibility, uniqueness_hypotheses_check, validate_assumptions

__all__ = ["main", "build_parser", "parse_grid"]

def _floats(text, what):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{what}: expected comma-separated numbers, got {text!r}") from None


def parse_grid(text, dim):
    """Parse ``t=0,0.5;x=0.1,0.2`` (coordinates of one point joined by ``:``) or a JSON file path."""
    if os.path.exists(text):
        with open(text, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"grid file {text}: malformed JSON at position {exc.pos}") from None
        return _grid_from_dict(doc, dim)
    parts = dict(p.split("=", 1) for p in text.split(";") if "=" in p)
    if set(parts) != {"t", "x"}:
        raise ConfigError(f"grid: expected 't=...;x=...', got {text!r}")
    times = _floats(parts["t"], "grid times")
    points = []
    for item in parts["x"].split(","):
        coords = _floats(item.replace(":", ","), "grid point")
        if len(coords) != dim:
            raise ConfigError(f"grid point {item!r} has {len(coords)} coordinates, expected {dim}")
        points.append(coords)
    return times, points


def _grid_from_dict(doc, dim):
    if not isinstance(doc, dict) or not {"times", "points"} <= set(doc) or set(doc) - {"times", "points", "tensor"}:
        raise ConfigError("grid: expected an object with 'times' and 'points'")
    pts = [p if isinstance(p, list) else [p] for p in doc["points"]]
    if any(len(p) != dim for p in pts):
        raise ConfigError(f"grid: every point needs {dim} coordinates")
    return [float(t) for t in doc["times"]], [[float(c) for c in p] for p in pts]


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _fingerprint():
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "platform": platform.platform(), "machine": platform.machine()}


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.bool_):
        return bool(v)
    raise TypeError(f"not JSON serialisable: {type(v).__name__}")


class _Run:
    """Collects outputs and writes the manifest on completion."""

    def __init__(self, args, cfg):
        self.args = args
        self.cfg = cfg
        self.start = time.perf_counter()
        self.outputs = []
        os.makedirs(args.out, exist_ok=True)

    def path(self, name):
        p = os.path.join(self.args.out, name)
        self.outputs.append(p)
        return p

    def finish(self, extra=None):
        manifest = {
            "artifact_version": __version__,
            "command": self.args.command,
            "argv": sys.argv[1:],
            "flags": {k: v for k, v in vars(self.args).items() if k not in ("func",)},
            "seed": getattr(self.args, "seed", None),
            "config": self.cfg.source if self.cfg is not None else None,
            "timings": {"wall_seconds": time.perf_counter() - self.start},
            "environment": _fingerprint(),
            "outputs": {os.path.basename(p): _sha256(p) for p in self.outputs},
        }
        if extra:
            manifest.update(extra)
        _write_json(os.path.join(self.args.out, "manifest.json"), manifest)


def _solver_cfg(cfg, args):
    base = cfg.solver
    eps = args.eps if getattr(args, "eps", None) is not None else base.eps
    return SolverConfig(**{**base.__dict__, "eps": eps})


def _mc(cfg, args, key, default):
    v = getattr(args, key, None)
    if v is not None:
        return v
    return int(cfg.mc.get(key, default))


def cmd_validate(args):
    cfg = load_config(args.config)
    p = cfg.problem
    val = cfg.validation
    n = args.samples or int(val.get("n_samples", 1024))
    yr = tuple(val.get("y_range", (-10.0, 10.0)))
    zr = tuple(val.get("z_range", (-10.0, 10.0)))
    eps_list = val.get("eps_list", [1e-1, 1e-2, 1e-3])
    reports = [validate_assumptions(p, n, args.seed, yr, zr), check_compatibility(p, eps_list, n, args.seed, yr, zr)]
    if args.uniqueness or val.get("uniqueness", False):
        reports.append(uniqueness_hypotheses_check(p, n, args.seed, yr, zr))
    run = _Run(args, cfg)
    failed = [name for r in reports for name in r.failed()]
    _write_json(run.path("validation.json"),
                {"ok": not failed, "violations": failed, "datum_bound": p.datum_bound,
                 "reports": [r.to_dict() for r in reports]})
    run.finish()
    for name in failed:
        print(f"violated: {name}", file=sys.stderr)
    return 1 if failed else 0


def _grid(cfg, args):
    if args.grid:
        return parse_grid(args.grid, cfg.problem.dim)
    if cfg.grid:
        return _grid_from_dict(cfg.grid, cfg.problem.dim)
    raise ConfigError("no grid given (use --grid or a 'grid' section)")


def cmd_solve(args):
    cfg = load_config(args.config)
    p = cfg.problem
    times, points = _grid(cfg, args)
    solver = _solver_cfg(cfg, args)
    n_paths = _mc(cfg, args, "paths", 10_000)
    n_steps = _mc(cfg, args, "steps", 100)
    t0 = time.perf_counter()
    sol = solve_grid(p, times, points, n_paths, n_steps, solver, args.seed)
    elapsed = time.perf_counter() - t0
    run = _Run(args, cfg)
    with open(run.path("solution.csv"), "w", encoding="utf-8", newline="") as fh:
        sol.write_csv(fh)
    reports = {"domain_membership": domain_membership_report(sol, p), "continuity": continuity_report(sol)}
    with open(run.path("summary.json"), "w", encoding="utf-8") as fh:
        sol.write_json(fh, {"config": cfg.source, "reports": reports, "timings": {"solve_seconds": elapsed}})
    run.finish({"eps": solver.eps})
    return 0


def _reversed_paths(p, t, x, n_paths, n_steps, seed):
    rev = p.time_reversed()
    grid = TimeGrid(p.T - t, p.T, n_steps)
    return rev, simulate(rev, grid.t0, x, grid, n_paths, seed)


def _point(cfg, args):
    x = _floats(args.x, "--x") if args.x else [float(v) for v in np.mean(cfg.problem.domain.bounding_box(), axis=0)]
    if len(x) != cfg.problem.dim:
        raise ConfigError(f"--x needs {cfg.problem.dim} coordinates")
    t = cfg.problem.T if args.t is None else args.t
    if not 0 < t <= cfg.problem.T:
        raise DomainError(f"--t must lie in (0, {cfg.problem.T}]")
    return t, x


def cmd_sweep_eps(args):
    cfg = load_config(args.config)
    p = cfg.problem
    eps_list = _floats(args.eps_list, "--eps-list")
    if len(eps_list) < 3:
        raise DomainError("sweep-eps needs at least three eps values")
    t, x = _point(cfg, args)
    rev, paths = _reversed_paths(p, t, x, _mc(cfg, args, "paths", 2000), _mc(cfg, args, "steps", 100), args.seed)
    table = penalization_sweep(rev, paths, eps_list, cfg.solver)
    run = _Run(args, cfg)
    with open(run.path("sweep.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write("eps,delta,distance_sq,distance\r\n")
        for r in table["rows"]:
            fh.write(f"{r['eps']!r},{r['delta']!r},{r['distance_sq']!r},{r['distance']!r}\r\n")
    slope = table["slope"]
    _write_json(run.path("sweep.json"), {
        "rows": table["rows"], "slope": None if np.isnan(slope) else slope,
        "slope_sq": None if np.isnan(table["slope_sq"]) else table["slope_sq"],
        "slope_defined": not np.isnan(slope), "y0": {repr(k): v for k, v in table["y0"].items()},
    })
    run.finish()
    print("slope: undefined (distances vanish)" if np.isnan(slope) else f"slope: {slope:.4f}")
    return 0


def _series_applicable(p):
    co = p.coeffs
    consts = [co.f, co.g, *co.drift]
    return (isinstance(p.domain, IntervalDomain) and p.domain.left == 0.0 and p.domain.right == 1.0
            and p.phi.is_zero and p.psi.is_zero
            and all(e.variables == frozenset() and float(e()) == 0.0 for e in consts)
            and co.diffusion[0][0].variables == frozenset() and float(co.diffusion[0][0]()) == 1.0)


def cmd_compare_oracle(args):
    cfg = load_config(args.config)
    p = cfg.problem
    if p.dim != 1:
        raise DomainError("oracle requires d=1")
    times, points = _grid(cfg, args)
    solver = _solver_cfg(cfg, args)
    sol = solve_grid(p, times, points, _mc(cfg, args, "paths", 10_000), _mc(cfg, args, "steps", 100), solver,
                     args.seed)
    oc = cfg.oracle
    kind = args.oracle
    if kind == "auto":
        kind = "series" if _series_applicable(p) else "fd"
    if kind == "series":
        if not _series_applicable(p):
            raise DomainError("series oracle needs the Neumann heat problem on [0, 1]")
        coeffs = cosine_coefficients(lambda x: p.coeffs.h_value(x[:, None]), int(oc.get("n_terms", 64)))
        ref = np.array([[neumann_heat_series(x[0], t, coeffs)[0] for x in sol.points] for t in sol.times])
        report = compare(sol, ((sol.times, sol.points[:, 0]), ref))
    else:
        fd = solve_penalized_fd(p, solver.eps, int(oc.get("nx", 200)), int(oc.get("nt", 400)),
                                float(oc.get("theta", 0.5)))
        report = compare(sol, fd)
    tol = args.tolerance if args.tolerance is not None else float(oc.get("tolerance", 5e-2))
    passed = report["sup"] <= tol
    run = _Run(args, cfg)
    with open(run.path("solution.csv"), "w", encoding="utf-8", newline="") as fh:
        sol.write_csv(fh)
    _write_json(run.path("compare.json"), {"oracle": kind, "tolerance": tol, "passed": passed, **report})
    run.finish()
    print(f"{'PASS' if passed else 'FAIL'} oracle={kind} sup={report['sup']:.3e} tol={tol:g}")
    return 0 if passed else 1


def cmd_simulate_sde(args):
    cfg = load_config(args.config)
    p = cfg.problem
    x = _floats(args.x, "--x") if args.x else [float(v) for v in np.mean(p.domain.bounding_box(), axis=0)]
    t0 = args.t0
    grid = TimeGrid(t0, p.T, _mc(cfg, args, "steps", 100))
    paths = simulate(p, t0, x, grid, _mc(cfg, args, "paths", 100), args.seed)
    run = _Run(args, cfg)
    if args.format == "npz":
        target = run.path("paths.npz")
        write_paths_npz(paths, target)
    else:
        with open(run.path("paths.csv"), "w", encoding="utf-8", newline="") as fh:
            write_paths_csv(paths, fh)
    run.finish()
    return 0


def cmd_bounds_report(args):
    cfg = load_config(args.config)
    p = cfg.problem
    t, x = _point(cfg, args)
    rev, paths = _reversed_paths(p, t, x, _mc(cfg, args, "paths", 10_000), _mc(cfg, args, "steps", 100), args.seed)
    solver = _solver_cfg(cfg, args)
    sol = solve_backward(rev, paths, solver)
    rep = apriori_bounds_report(sol, rev)
    run = _Run(args, cfg)
    _write_json(run.path("bounds.json"), {"eps": solver.eps, "y0": sol.y0, **rep,
                                          "diagnostics": sol.diagnostics()})
    run.finish()
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="pvisolve", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, seed_required=True):
        sp.add_argument("config", help="problem configuration (JSON)")
        sp.add_argument("--out", default="pvisolve-out", help="output directory")
        if seed_required:
            sp.add_argument("--seed", type=int, required=True, help="master random seed")

    def mc(sp):
        sp.add_argument("--paths", type=int)
        sp.add_argument("--steps", type=int)

    sp = sub.add_parser("validate", help="check the structural hypotheses")
    common(sp, seed_required=False)
    sp.add_argument("--seed", type=int, default=0, help="seed of the quasi-random samples")
    sp.add_argument("--samples", type=int)
    sp.add_argument("--uniqueness", action="store_true", help="also check the uniqueness hypotheses")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("solve", help="Monte Carlo solution on a grid")
    common(sp)
    mc(sp)
    sp.add_argument("--grid", help="'t=..;x=..' or a JSON file with times and points")
    sp.add_argument("--eps", type=float)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("sweep-eps", help="penalisation sweep at one node")
    common(sp)
    mc(sp)
    sp.add_argument("--eps-list", required=True)
    sp.add_argument("--t", type=float)
    sp.add_argument("--x")
    sp.set_defaults(func=cmd_sweep_eps)

    sp = sub.add_parser("compare-oracle", help="compare against a deterministic oracle (d=1)")
    common(sp)
    mc(sp)
    sp.add_argument("--grid")
    sp.add_argument("--eps", type=float)
    sp.add_argument("--tolerance", type=float)
    sp.add_argument("--oracle", choices=("auto", "series", "fd"), default="auto")
    sp.set_defaults(func=cmd_compare_oracle)

    sp = sub.add_parser("simulate-sde", help="dump reflected paths")
    common(sp)
    mc(sp)
    sp.add_argument("--x")
    sp.add_argument("--t0", type=float, default=0.0)
    sp.add_argument("--format", choices=("csv", "npz"), default="csv")
    sp.set_defaults(func=cmd_simulate_sde)

    sp = sub.add_parser("bounds-report", help="a-priori bound ratios at one node")
    common(sp)
    mc(sp)
    sp.add_argument("--t", type=float)
    sp.add_argument("--x")
    sp.add_argument("--eps", type=float)
    sp.set_defaults(func=cmd_bounds_report)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except PVIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if args.command == "validate" and isinstance(exc, ConfigError):
            _write_json(_ensure_dir(args.out, "validation.json"), {"ok": False, "error": str(exc)})
        return exc.exit_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _ensure_dir(out, name):
    os.makedirs(out, exist_ok=True)
    return os.path.join(out, name)


if __name__ == "__main__":
    sys.exit(main())
