"""Reflected diffusion on a level-set domain by the projected Euler scheme.

One step from ``X_k``::

    X_hat = X_k + b(t_k, X_k) dt + sigma(t_k, X_k) dW_k
    X_{k+1} = X_hat,            dA_k = 0               if level(X_hat) <= 0
    X_{k+1} = project(X_hat),   dA_k = |X_hat - X_{k+1}|  otherwise

so states never leave the closed domain and the local time only grows on
boundary states.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from . import rng
from .exceptions import GeometryError
from .problem import BOUNDARY_TOL, DomainSpec, ProblemSpec

__all__ = [
    "TimeGrid",
    "PathBundle",
    "simulate",
    "project",
    "project_generic",
    "estimate_exp_local_time",
    "continuity_modulus_experiment",
    "write_paths_csv",
    "write_paths_npz",
]


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    T: float
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        if not self.T > self.t0:
            raise ValueError(f"need T > t0, got t0={self.t0}, T={self.T}")

    @property
    def dt(self):
        return (self.T - self.t0) / self.n_steps

    @property
    def nodes(self):
        return self.t0 + self.dt * np.arange(self.n_steps + 1)


@dataclass
class PathBundle:
    """Simulated paths; arrays are indexed ``[k, path, ...]``."""

    grid: TimeGrid
    n_paths: int
    dW: np.ndarray  # (N, n, d)
    X: np.ndarray  # (N + 1, n, d)
    A: np.ndarray  # (N + 1, n)
    seed: int
    stream: int = 0
    step_offset: int = 0

    @property
    def dA(self):
        return np.diff(self.A, axis=0)

    def check_invariants(self, domain: DomainSpec, tol=BOUNDARY_TOL):
        """Return a list of violated invariants (empty when all hold)."""
        problems = []
        n1, n, d = self.X.shape
        lev = domain.level(self.X.reshape(-1, d)).reshape(n1, n)
        if np.any(lev > tol):
            problems.append(f"{int(np.sum(lev > tol))} states outside the closed domain")
        if np.any(self.A[0] != 0):
            problems.append("A_0 != 0")
        dA = self.dA
        if np.any(dA < 0):
            problems.append("local time decreases")
        pushed = dA > 0
        if np.any(pushed & (np.abs(lev[1:]) > tol)):
            problems.append("local time grows at an interior state")
        return problems


def _checks_enabled():
    return os.environ.get("PVISOLVE_CHECKS", "") not in ("", "0")


def project_generic(domain: DomainSpec, y, max_iter=50, tol=1e-13):
    """Nearest boundary point by damped Newton along the normal.

    For each outer iteration the normal ``n`` is frozen and the scalar
    ``s -> level(y - s n)`` is driven to zero by damped Newton; ``n`` is then
    re-evaluated at the new point (the orthogonal correction) until the
    boundary point stops moving.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    g = domain.gradient(y)
    nrm = g / np.linalg.norm(g, axis=1, keepdims=True)
    s = domain.level(y) / np.linalg.norm(g, axis=1)
    p = y - s[:, None] * nrm
    for _ in range(max_iter):
        for _inner in range(max_iter):
            lev = domain.level(p)
            if np.all(np.abs(lev) <= tol):
                break
            slope = -np.einsum("ij,ij->i", domain.gradient(p), nrm)
            step = np.where(np.abs(slope) > 1e-14, lev / slope, 0.0)
            trial = s - step
            p_trial = y - trial[:, None] * nrm
            worse = np.abs(domain.level(p_trial)) > np.abs(lev)
            damp = 1.0
            while np.any(worse) and damp > 1e-6:
                damp *= 0.5
                trial = np.where(worse, s - damp * step, trial)
                p_trial = y - trial[:, None] * nrm
                worse = np.abs(domain.level(p_trial)) > np.abs(lev)
            s = trial
            p = p_trial
        else:
            raise GeometryError("boundary projection: Newton iteration did not converge")
        g = domain.gradient(p)
        new_nrm = g / np.linalg.norm(g, axis=1, keepdims=True)
        moved = np.max(np.abs(new_nrm - nrm))
        nrm = new_nrm
        if moved <= 1e-13:
            return p, np.linalg.norm(y - p, axis=1)
        s = np.einsum("ij,ij->i", y - p, nrm)
        p = y - s[:, None] * nrm
    raise GeometryError("boundary projection: normal iteration did not converge")


def project(domain: DomainSpec, y):
    """Project points outside the domain back onto its boundary.

    Returns ``(points, distances)``.  Raises :class:`GeometryError` if a
    point is further out than the domain's reach (halve the time step).
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    lev = domain.level(y)
    if np.any(lev > domain.reach):
        raise GeometryError(
            f"point {y[np.argmax(lev)].tolist()} is beyond the projection reach {domain.reach}; "
            "reduce the time step")
    p = domain.nearest_boundary_point(y)
    if p is None:
        return project_generic(domain, y)
    return p, np.linalg.norm(y - p, axis=1)


def simulate(p: ProblemSpec, t0, x0, grid: TimeGrid, n_paths, seed, stream=0, step_offset=0,
             check=None) -> PathBundle:
    """Simulate ``n_paths`` reflected paths started at ``x0`` on ``grid``.

    ``t0`` must equal ``grid.t0``; it is kept in the signature so call sites
    read as ``simulate(problem, t, x, ...)``.  The increment of path ``i`` at
    step ``k`` depends only on ``(seed, stream, i, step_offset + k)``.
    """
    if abs(t0 - grid.t0) > 1e-12 * max(1.0, abs(t0)):
        raise ValueError(f"t0={t0} does not match grid start {grid.t0}")
    dom = p.domain
    d = dom.dim
    x0 = np.asarray(x0, dtype=float).reshape(d)
    if dom.level(x0[None, :])[0] > BOUNDARY_TOL:
        raise GeometryError(f"start point {x0.tolist()} lies outside the closed domain")
    N, dt = grid.n_steps, grid.dt
    sq = np.sqrt(dt)
    idx = np.arange(n_paths, dtype=np.uint64)
    times = grid.nodes
    X = np.empty((N + 1, n_paths, d))
    A = np.zeros((N + 1, n_paths))
    dW = np.empty((N, n_paths, d))
    X[0] = x0
    b_const = p.coeffs.constant_drift
    s_const = p.coeffs.constant_diffusion
    for k in range(N):
        xk = X[k]
        dW[k] = sq * rng.normals(seed, stream, idx, step_offset + k, d)
        drift = b_const * dt if b_const is not None else p.coeffs.b(times[k], xk) * dt
        if s_const is not None:
            noise = dW[k] @ s_const.T
        else:
            noise = np.einsum("nij,nj->ni", p.coeffs.sigma(times[k], xk), dW[k])
        xh = xk + drift + noise
        out = dom.level(xh) > 0
        A[k + 1] = A[k]
        if np.any(out):
            proj, dist = project(dom, xh[out])
            xh[out] = proj
            A[k + 1, out] += dist
        X[k + 1] = xh
    bundle = PathBundle(grid, n_paths, dW, X, A, int(seed), int(stream), int(step_offset))
    if check if check is not None else _checks_enabled():
        problems = bundle.check_invariants(dom)
        if problems:
            raise AssertionError("path bundle invariants violated: " + "; ".join(problems))
    return bundle


def _mean_se(values):
    values = np.asarray(values, dtype=float)
    n = values.size
    mean = float(np.sum(values) / n)
    if n < 2:
        return mean, 0.0
    return mean, float(np.std(values, ddof=1) / np.sqrt(n))


def estimate_exp_local_time(paths: PathBundle, mu):
    """Monte Carlo mean and standard error of ``exp(mu * A_T)``."""
    if mu < 0:
        raise ValueError(f"mu must be nonnegative, got {mu}")
    if mu == 0:
        return 1.0, 0.0
    return _mean_se(np.exp(mu * paths.A[-1]))


def continuity_modulus_experiment(p: ProblemSpec, start, start2, p_exp, n_paths, seed, n_steps=200):
    """Estimate ``E sup_s |X^{t,x}_s - X^{t',x'}_s|^p_exp`` under shared noise.

    Both paths live on the uniform grid of ``[0, T]`` with ``n_steps`` steps;
    a path started at time ``t`` sits at ``x`` before ``t`` and is driven by
    the same increments as the other path afterwards.  Start times are
    rounded to the grid.
    """
    (t1, x1), (t2, x2) = start, start2
    full = TimeGrid(0.0, p.T, n_steps)
    dt = full.dt
    d = p.dim

    def run(t, x):
        i0 = int(round(t / dt))
        xs = np.empty((n_steps + 1, n_paths, d))
        xs[: i0 + 1] = np.asarray(x, dtype=float).reshape(d)
        if i0 < n_steps:
            sub = TimeGrid(i0 * dt, p.T, n_steps - i0)
            b = simulate(p, sub.t0, x, sub, n_paths, seed, step_offset=i0)
            xs[i0:] = b.X
        return xs

    if p_exp == 0:
        return 1.0
    xa = run(t1, x1)
    xb = run(t2, x2)
    gap = np.max(np.linalg.norm(xa - xb, axis=2), axis=0)
    return float(np.sum(gap**p_exp) / n_paths)


def write_paths_csv(paths: PathBundle, fh):
    """Write ``path,k,t,x1..xd,A`` rows (RFC 4180, header first)."""
    d = paths.X.shape[2]
    w = csv.writer(fh, lineterminator="\r\n")
    w.writerow(["path", "k", "t", *[f"x{i + 1}" for i in range(d)], "A"])
    times = paths.grid.nodes
    for i in range(paths.n_paths):
        for k in range(paths.grid.n_steps + 1):
            w.writerow([i, k, repr(float(times[k])), *[repr(float(v)) for v in paths.X[k, i]],
                        repr(float(paths.A[k, i]))])


def write_paths_npz(paths: PathBundle, path):
    """Columnar binary dump: arrays ``t``, ``X`` (k, path, dim), ``A``, ``dW``."""
    np.savez(path, t=paths.grid.nodes, X=paths.X, A=paths.A, dW=paths.dW,
             seed=paths.seed, stream=paths.stream)
