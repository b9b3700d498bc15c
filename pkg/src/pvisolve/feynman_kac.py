"""Pointwise solution of the forward variational inequality.

The problem is posed forward in time with ``u(0, x) = h(x)``.  Its value at
``(t, x)`` is the start value of the backward equation driven by the
reflected diffusion started at time ``T - t`` from ``x`` with coefficients
evaluated at ``T - r``.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bsvi import BackwardSolution, SolverConfig, solve_backward
from .exceptions import DomainError
from .problem import BOUNDARY_TOL, ProblemSpec
from .sde import TimeGrid, simulate

__all__ = [
    "PointEstimate",
    "SolutionGrid",
    "evaluate_point",
    "evaluate_point_detailed",
    "evaluate_point_autonomous",
    "solve_grid",
    "domain_membership_report",
    "continuity_report",
    "pathwise_estimator",
    "read_solution_csv",
]

WORKERS_ENV = "PVISOLVE_WORKERS"


@dataclass
class PointEstimate:
    value: float
    std_error: float
    solution: BackwardSolution | None = None


def pathwise_estimator(p: ProblemSpec, sol: BackwardSolution):
    """Per-path ``xi + sum_k [dt (f_k - U_k) + dA_k (g_k - V_k)]``.

    Its sample mean tracks ``Y_0`` and its spread gives the standard error.
    ``p`` must be the (time-reversed) problem the solution was computed for.
    """
    paths = sol.paths
    grid = paths.grid
    dt = grid.dt
    dA = paths.dA
    acc = sol.Y[-1].copy()
    f_zero = p.coeffs.f.variables == frozenset() and float(p.coeffs.f()) == 0.0
    g_zero = p.coeffs.g.variables == frozenset() and float(p.coeffs.g()) == 0.0
    for k in range(grid.n_steps):
        t, x, y = grid.nodes[k], paths.X[k], sol.Y[k]
        f = 0.0 if f_zero else p.coeffs.f_value(t, x, y, sol.Z[k])
        g = 0.0 if g_zero else p.coeffs.g_value(t, x, y)
        acc += dt * (f - sol.U[k]) + dA[k] * (g - sol.V[k])
    return acc


def _check_point(p: ProblemSpec, t, x):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != p.dim:
        raise DomainError(f"point {x.tolist()} has dimension {x.size}, expected {p.dim}")
    if not 0.0 <= t <= p.T:
        raise DomainError(f"time {t} outside [0, {p.T}]")
    if p.domain.level(x[None, :])[0] > BOUNDARY_TOL:
        raise DomainError(f"point {x.tolist()} lies outside the closed domain")
    return x


def evaluate_point_detailed(p: ProblemSpec, t, x, n_paths, n_steps, cfg: SolverConfig = SolverConfig(),
                            seed=0, stream=0) -> PointEstimate:
    """Like :func:`evaluate_point` but also returns the backward solution."""
    x = _check_point(p, t, x)
    if t == 0:
        return PointEstimate(float(p.coeffs.h_value(x[None, :])[0]), 0.0)
    rev = p.time_reversed()
    start = p.T - t
    grid = TimeGrid(start, p.T, n_steps)
    paths = simulate(rev, start, x, grid, n_paths, seed, stream=stream)
    sol = solve_backward(rev, paths, cfg)
    est = pathwise_estimator(rev, sol)
    se = float(np.std(est, ddof=1) / np.sqrt(n_paths)) if n_paths > 1 else 0.0
    return PointEstimate(sol.y0, se, sol)


def evaluate_point(p: ProblemSpec, t, x, n_paths, n_steps, cfg: SolverConfig = SolverConfig(), seed=0,
                   stream=0):
    """Monte Carlo estimate of ``u(t, x)`` and its standard error.

    ``t = 0`` returns ``h(x)`` exactly with zero error.
    """
    est = evaluate_point_detailed(p, t, x, n_paths, n_steps, cfg, seed, stream)
    return est.value, est.std_error


def evaluate_point_autonomous(p: ProblemSpec, t, x, n_paths, n_steps, cfg: SolverConfig = SolverConfig(),
                              seed=0, stream=0):
    """``u(t, x)`` for time-independent coefficients via the horizon-``t`` problem on ``[0, t]``."""
    if not p.coeffs.is_autonomous():
        raise ValueError("coefficients depend on t; use evaluate_point")
    x = _check_point(p, t, x)
    if t == 0:
        return float(p.coeffs.h_value(x[None, :])[0]), 0.0
    grid = TimeGrid(0.0, t, n_steps)
    paths = simulate(p, 0.0, x, grid, n_paths, seed, stream=stream)
    sol = solve_backward(p, paths, cfg)
    est = pathwise_estimator(p, sol)
    se = float(np.std(est, ddof=1) / np.sqrt(n_paths)) if n_paths > 1 else 0.0
    return sol.y0, se


@dataclass
class SolutionGrid:
    """Values ``u[i, j]`` at ``times[i]`` and ``points[j]``."""

    times: np.ndarray
    points: np.ndarray
    values: np.ndarray
    std_errors: np.ndarray
    boundary: np.ndarray
    meta: dict = field(default_factory=dict)

    def rows(self):
        for i, t in enumerate(self.times):
            for j, x in enumerate(self.points):
                yield t, x, self.values[i, j], self.std_errors[i, j], bool(self.boundary[j])

    def write_csv(self, fh):
        """RFC 4180 rows ``t,x1..xd,u,std_error,boundary_flag``."""
        d = self.points.shape[1]
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["t", *[f"x{i + 1}" for i in range(d)], "u", "std_error", "boundary_flag"])
        for t, x, u, se, b in self.rows():
            w.writerow([repr(float(t)), *[repr(float(v)) for v in x], repr(float(u)), repr(float(se)), int(b)])

    def summary(self):
        return {
            "times": [float(t) for t in self.times],
            "points": self.points.tolist(),
            "min_u": float(np.min(self.values)),
            "max_u": float(np.max(self.values)),
            "max_std_error": float(np.max(self.std_errors)),
            "meta": self.meta,
        }

    def write_json(self, fh, extra=None):
        doc = self.summary()
        if extra:
            doc.update(extra)
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_solution_csv(fh) -> SolutionGrid:
    """Inverse of :meth:`SolutionGrid.write_csv` for tensor grids."""
    rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    d = len(header) - 4
    data = np.array([[float(v) for v in r] for r in body])
    times = np.unique(data[:, 0])
    pts = []
    for r in data:
        key = tuple(r[1:1 + d])
        if key not in pts:
            pts.append(key)
    index = {k: j for j, k in enumerate(pts)}
    values = np.full((times.size, len(pts)), np.nan)
    ses = np.full_like(values, np.nan)
    bnd = np.zeros(len(pts), dtype=bool)
    for r in data:
        i = int(np.searchsorted(times, r[0]))
        j = index[tuple(r[1:1 + d])]
        values[i, j] = r[1 + d]
        ses[i, j] = r[2 + d]
        bnd[j] = r[3 + d] != 0
    return SolutionGrid(times, np.array(pts), values, ses, bnd)


def _node_task(args):
    p, t, x, n_paths, n_steps, cfg, seed, stream = args
    return evaluate_point(p, t, x, n_paths, n_steps, cfg, seed, stream)


def _workers():
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def solve_grid(p: ProblemSpec, times, points, n_paths, n_steps, cfg: SolverConfig = SolverConfig(), seed=0,
               workers=None) -> SolutionGrid:
    """Evaluate every ``(t, x)`` node with its own random stream.

    Node ``(i, j)`` uses stream ``i * len(points) + j``, so the result does
    not depend on the number of worker processes (``workers`` or the
    ``PVISOLVE_WORKERS`` environment variable).
    """
    times = np.asarray(times, dtype=float).reshape(-1)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if p.dim == 1 and pts.shape[0] == 1 and pts.shape[1] != 1:
        pts = pts.T
    if times.size == 0 or pts.shape[0] == 0:
        raise ValueError("solve_grid needs nonempty time and point grids")
    for x in pts:
        _check_point(p, 0.0, x)
    for t in times:
        _check_point(p, t, pts[0])
    tasks = [(p, float(t), x, n_paths, n_steps, cfg, seed, i * len(pts) + j)
             for i, t in enumerate(times) for j, x in enumerate(pts)]
    workers = _workers() if workers is None else workers
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_node_task, tasks))
    else:
        results = [_node_task(a) for a in tasks]
    vals = np.array([r[0] for r in results]).reshape(times.size, pts.shape[0])
    ses = np.array([r[1] for r in results]).reshape(times.size, pts.shape[0])
    bnd = p.domain.on_boundary(pts)
    meta = {"paths": int(n_paths), "steps": int(n_steps), "eps": cfg.eps, "seed": int(seed),
            "basis_degree": cfg.basis_degree}
    return SolutionGrid(times, pts, vals, ses, np.asarray(bnd, dtype=bool), meta)


def domain_membership_report(sol: SolutionGrid, p: ProblemSpec, kappa=2.0, eps=None):
    """Margins of ``u`` against the effective domains of ``phi`` (all nodes) and ``psi`` (boundary nodes).

    A node passes when ``u`` is within ``3 SE + kappa sqrt(eps)`` of the
    domain.  Functions with unbounded domain pass vacuously.
    """
    eps = sol.meta.get("eps", 0.0) if eps is None else eps
    slack = 3.0 * sol.std_errors + kappa * np.sqrt(eps)
    out = {"kappa": kappa, "eps": eps, "checks": []}
    for name, f, mask in (("phi", p.phi, np.ones(sol.points.shape[0], dtype=bool)), ("psi", p.psi, sol.boundary)):
        lo, hi = f.domain_bounds()
        for side, bound in (("lower", lo), ("upper", hi)):
            if not np.isfinite(bound) or not np.any(mask):
                out["checks"].append({"function": name, "side": side, "vacuous": True, "passed": True})
                continue
            gap = (sol.values - bound) if side == "lower" else (bound - sol.values)
            gap = gap[:, mask]
            ok = gap >= -slack[:, mask]
            i, j = np.unravel_index(np.argmin(gap), gap.shape)
            out["checks"].append({
                "function": name, "side": side, "vacuous": False, "bound": float(bound),
                "min_margin": float(gap[i, j]), "slack_at_min": float(slack[:, mask][i, j]),
                "worst_node": {"t": float(sol.times[i]), "x": sol.points[mask][j].tolist()},
                "passed": bool(np.all(ok)),
            })
    out["passed"] = all(c["passed"] for c in out["checks"])
    return out


def continuity_report(sol: SolutionGrid):
    """Largest jump between adjacent nodes in ``t`` and along the point list."""
    if sol.times.size < 2 and sol.points.shape[0] < 2:
        return {}
    out = {"max_std_error": float(np.max(sol.std_errors))}
    if sol.times.size > 1:
        jumps = np.abs(np.diff(sol.values, axis=0))
        steps = np.diff(sol.times)[:, None]
        out["t_modulus"] = float(np.max(jumps))
        out["t_slope"] = float(np.max(jumps / steps))
    if sol.points.shape[0] > 1:
        jumps = np.abs(np.diff(sol.values, axis=1))
        steps = np.linalg.norm(np.diff(sol.points, axis=0), axis=1)[None, :]
        out["x_modulus"] = float(np.max(jumps))
        out["x_slope"] = float(np.max(jumps / steps))
    return out
