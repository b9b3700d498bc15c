"""Yosida-penalised backward equation solved by regression Monte Carlo.

Backward Euler on the simulated grid, implicit in ``y`` and explicit in ``z``::

    e_k = E_k[Y_{k+1}],   Z_k = E_k[Y_{k+1} dW_k] / dt
    Y_k + dt U(Y_k) + dA_k V(Y_k) - dt f(t_k, X_k, Y_k, Z_k) - dA_k g(t_k, X_k, Y_k) = e_k

with ``U`` and ``V`` the Yosida gradients of ``phi`` and ``psi``.  Conditional
expectations are least-squares projections on polynomials in ``x`` plus the
level function of the domain.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np

from .convex import backward_prox_step
from .exceptions import ImplicitSolveError, RegressionError
from .expressions import Expression, parse_expression
from .problem import ProblemSpec
from .sde import PathBundle

__all__ = [
    "SolverConfig",
    "BackwardSolution",
    "solve_backward",
    "contraction_experiment",
    "penalization_sweep",
    "apriori_bounds_report",
    "fit_loglog_slope",
]

COND_LIMIT = 1e10


@dataclass(frozen=True)
class SolverConfig:
    """Numerical knobs of the backward solver.

    ``eps`` is the penalisation parameter; ``basis_degree`` the total degree of
    the polynomial regression basis (0 means per-step sample means, in which
    case the level-function feature is dropped too).  ``picard_iters`` is
    accepted for configuration compatibility; since each step is solved
    exactly in ``y`` and ``z`` only depends on ``Y_{k+1}``, further sweeps
    would reproduce the same step and are not performed.
    """

    eps: float = 1e-3
    basis_degree: int = 3
    level_feature: bool = True
    implicit_tol: float = 1e-12
    implicit_max_iter: int = 200
    picard_iters: int = 1
    stability_cap: float = 10.0

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.basis_degree < 0:
            raise ValueError("basis_degree must be >= 0")
        if self.picard_iters < 1:
            raise ValueError("picard_iters must be >= 1")


@dataclass
class BackwardSolution:
    """Backward quantities indexed ``[k, path]``; ``U``, ``V``, ``Z`` have ``N`` steps."""

    paths: PathBundle
    eps: float
    Y: np.ndarray  # (N + 1, n)
    Z: np.ndarray  # (N, n, d)
    U: np.ndarray  # (N, n)
    V: np.ndarray  # (N, n)
    condition_numbers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    residual_norms: np.ndarray = field(default_factory=lambda: np.zeros(0))
    implicit_residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def grid(self):
        return self.paths.grid

    @property
    def y0(self):
        return float(np.sum(self.Y[0]) / self.Y.shape[1])

    def diagnostics(self):
        return {
            "max_condition_number": float(np.max(self.condition_numbers, initial=0.0)),
            "max_regression_residual": float(np.max(self.residual_norms, initial=0.0)),
            "max_implicit_residual": float(np.max(self.implicit_residuals, initial=0.0)),
        }


def _terminal_values(p: ProblemSpec, terminal, x):
    if terminal is None:
        return p.coeffs.h_value(x)
    if isinstance(terminal, (int, float)):
        return np.full(x.shape[0], float(terminal))
    if isinstance(terminal, str):
        terminal = parse_expression(terminal)
    if isinstance(terminal, Expression):
        env = {f"x{i + 1}": x[:, i] for i in range(x.shape[1])}
        return np.broadcast_to(terminal(t=0.0, **env), (x.shape[0],)).astype(float)
    return np.asarray(terminal(x), dtype=float).reshape(x.shape[0])


class _Basis:
    def __init__(self, p: ProblemSpec, cfg: SolverConfig):
        self.domain = p.domain
        lo, hi = p.domain.bounding_box()
        self.center = 0.5 * (lo + hi)
        self.scale = np.where(hi > lo, 0.5 * (hi - lo), 1.0)
        d = p.dim
        self.exponents = [e for deg in range(cfg.basis_degree + 1)
                          for e in itertools.product(range(deg + 1), repeat=d) if sum(e) == deg]
        self.level = cfg.level_feature and cfg.basis_degree > 0

    def __call__(self, x):
        u = (x - self.center) / self.scale
        top = max((max(e) for e in self.exponents), default=0)
        powers = [[np.ones(x.shape[0])] for _ in range(u.shape[1])]
        for j, pw in enumerate(powers):
            for _ in range(top):
                pw.append(pw[-1] * u[:, j])
        cols = []
        for e in self.exponents:
            col = powers[0][e[0]]
            for j in range(1, len(e)):
                col = col * powers[j][e[j]]
            cols.append(col)
        if self.level:
            cols.append(self.domain.level(x))
        return np.column_stack(cols)


class _Projector:
    """Least-squares fitted values on a fixed design matrix.

    Gram eigen-decomposition; directions with singular value below
    ``s_max / COND_LIMIT`` are dropped (truncated pseudo-inverse), which keeps
    the fit an orthogonal projection.  ``cond`` is the condition number of
    the retained subspace.
    """

    def __init__(self, phi_mat):
        gram = phi_mat.T @ phi_mat
        if not np.all(np.isfinite(gram)):
            raise RegressionError("non-finite regression design")
        lam, vec = np.linalg.eigh(gram)
        lam_max = lam[-1]
        if not lam_max > 0:
            raise RegressionError("regression design is identically zero")
        keep = lam > lam_max / COND_LIMIT**2
        self.cond = float(np.sqrt(lam_max / np.min(lam[keep])))
        self._phi = phi_mat
        self._v = vec[:, keep]
        self._lam = lam[keep]

    def __call__(self, rhs):
        v = self._v
        coef = v @ ((v.T @ (self._phi.T @ rhs)) / self._lam.reshape(-1, *([1] * (rhs.ndim - 1))))
        return self._phi @ coef


def _implicit_solve(p, cfg, t, x, z, e, dt, dA, eps):
    """Vectorised safeguarded Newton for the per-path implicit equation."""
    phi, psi = p.phi, p.psi
    fy = p.coeffs.f.depends_on("y")
    gy = p.coeffs.g.depends_on("y")
    boundary = dA > 0
    use_psi = not psi.is_zero and np.any(boundary)
    use_g = np.any(boundary)

    if not fy and not (gy and use_g):
        c = e + dt * p.coeffs.f_value(t, x, e, z)
        if use_g:
            c = c + dA * p.coeffs.g_value(t, x, e)
        if not use_psi:
            return np.asarray(backward_prox_step(phi, eps, dt, c), dtype=float)
        if phi.is_zero:
            y = c.copy()
            # per-path step length dA: apply the closed form path by path group
            for h in np.unique(dA[boundary]):
                sel = dA == h
                y[sel] = backward_prox_step(psi, eps, float(h), c[sel])
            return y

    def resid(y):
        r = y + dt * phi.yosida(eps, y) - dt * p.coeffs.f_value(t, x, y, z) - e
        if use_psi:
            r = r + dA * psi.yosida(eps, y)
        if use_g:
            r = r - dA * p.coeffs.g_value(t, x, y)
        return r

    def slope(y, r):
        h = 1e-7 * np.maximum(1.0, np.abs(y))
        fd = (resid(y + h) - r) / h
        exact = 1.0 + dt * phi.yosida_slope(eps, y)
        if use_psi:
            exact = exact + dA * psi.yosida_slope(eps, y)
        if not fy and not (gy and use_g):
            return exact
        return np.maximum(fd, 1e-12)

    tol = cfg.implicit_tol * np.maximum(1.0, np.abs(e))
    y = e.copy()
    r = resid(y)
    lo = np.where(r <= 0, y, -np.inf)
    hi = np.where(r >= 0, y, np.inf)
    radius = 1.0 + np.abs(r)
    for _ in range(80):
        need_lo = ~np.isfinite(lo)
        need_hi = ~np.isfinite(hi)
        if not (np.any(need_lo) or np.any(need_hi)):
            break
        if np.any(need_lo):
            cand = e - radius
            ok = need_lo & (resid(cand) <= 0)
            lo = np.where(ok, cand, lo)
        if np.any(need_hi):
            cand = e + radius
            ok = need_hi & (resid(cand) >= 0)
            hi = np.where(ok, cand, hi)
        radius *= 2.0
    else:
        raise ImplicitSolveError("no sign change in the safeguard bracket; reduce the time step")
    for _ in range(cfg.implicit_max_iter):
        r = resid(y)
        done = np.abs(r) <= tol
        if np.all(done):
            return y
        lo = np.where(r < 0, np.maximum(lo, y), lo)
        hi = np.where(r > 0, np.minimum(hi, y), hi)
        step = y - r / slope(y, r)
        bad = ~np.isfinite(step) | (step <= lo) | (step >= hi)
        y = np.where(done, y, np.where(bad, 0.5 * (lo + hi), step))
    raise ImplicitSolveError(f"implicit solve did not reach tolerance in {cfg.implicit_max_iter} iterations")


def _implicit_residual(p, t, x, z, e, dt, dA, eps, y):
    r = (y + dt * p.phi.yosida(eps, y) + dA * p.psi.yosida(eps, y)
         - dt * p.coeffs.f_value(t, x, y, z) - dA * p.coeffs.g_value(t, x, y) - e)
    return np.abs(r) / np.maximum(1.0, np.abs(e))


def solve_backward(p: ProblemSpec, paths: PathBundle, cfg: SolverConfig = SolverConfig(),
                   terminal=None) -> BackwardSolution:
    """Backward induction from ``Y_N = terminal(X_N)`` (default the datum ``h``).

    ``p`` must be the problem the paths were simulated under; its
    coefficients are evaluated at the grid times as given.
    """
    grid = paths.grid
    N, dt = grid.n_steps, grid.dt
    n, d = paths.n_paths, paths.X.shape[2]
    eps = cfg.eps
    penalised = not (p.phi.is_zero and p.psi.is_zero)
    if penalised and dt / eps > cfg.stability_cap:
        warnings.warn(f"dt/eps = {dt / eps:.3g} exceeds the stability cap {cfg.stability_cap}",
                      RuntimeWarning, stacklevel=2)
    basis = _Basis(p, cfg)
    times = grid.nodes
    dA = paths.dA
    Y = np.empty((N + 1, n))
    Z = np.zeros((N, n, d))
    U = np.zeros((N, n))
    V = np.zeros((N, n))
    conds = np.zeros(N)
    res_norms = np.zeros(N)
    imp = np.zeros(N)
    Y[N] = _terminal_values(p, terminal, paths.X[N])
    for k in range(N - 1, -1, -1):
        xk = paths.X[k]
        proj = _Projector(basis(xk))
        conds[k] = proj.cond
        e = proj(Y[k + 1])
        # centring by e leaves the conditional mean unchanged and removes noise
        resid = Y[k + 1] - e
        z = proj(resid[:, None] * paths.dW[k]) / dt
        res_norms[k] = float(np.sqrt(np.sum(resid**2) / n))
        y = _implicit_solve(p, cfg, times[k], xk, z, e, dt, dA[k], eps)
        Y[k] = y
        Z[k] = z
        U[k] = p.phi.yosida(eps, y)
        V[k] = p.psi.yosida(eps, y)
        imp[k] = float(np.max(_implicit_residual(p, times[k], xk, z, e, dt, dA[k], eps, y)))
    return BackwardSolution(paths, eps, Y, Z, U, V, conds, res_norms, imp)


def _weights(paths: PathBundle, lam, mu):
    return np.exp(lam * paths.grid.nodes[:, None] + mu * paths.A)


def contraction_experiment(p: ProblemSpec, paths: PathBundle, cfg: SolverConfig, xi_a, xi_b,
                           lam=None, mu=None):
    """Compare two terminal maps on shared paths.

    Returns weighted ``E sup_k w_k |Y_k - Y~_k|^2``, ``E w_N |xi - xi~|^2``,
    their ratio, and the unweighted ``sup_k mean (Y_k - Y~_k)^2`` with its
    terminal counterpart.  Weights are ``exp(lam t_k + mu A_k)`` (defaults
    from the problem constants).
    """
    lam = p.constants.lam if lam is None else lam
    mu = p.constants.mu if mu is None else mu
    sa = solve_backward(p, paths, cfg, terminal=xi_a)
    sb = solve_backward(p, paths, cfg, terminal=xi_b)
    w = _weights(paths, lam, mu)
    diff2 = (sa.Y - sb.Y) ** 2
    n = paths.n_paths
    numerator = float(np.sum(np.max(w * diff2, axis=0)) / n)
    denominator = float(np.sum(w[-1] * diff2[-1]) / n)
    per_step = np.sum(diff2, axis=1) / n
    return {
        "numerator": numerator,
        "denominator": denominator,
        "ratio": numerator / denominator if denominator > 0 else float("nan"),
        "sup_mean_sq": float(np.max(per_step)),
        "terminal_mean_sq": float(per_step[-1]),
        "mean_sq_by_step": per_step,
    }


def fit_loglog_slope(xs, ys):
    """Least-squares slope of ``log ys`` against ``log xs``; NaN if any ``ys <= 0``."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if np.any(ys <= 0) or np.any(xs <= 0) or len(xs) < 2:
        return float("nan")
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def penalization_sweep(p: ProblemSpec, paths: PathBundle, eps_list, cfg: SolverConfig = SolverConfig(),
                       lam=None, mu=None, floor=1e-20):
    """Solve for each penalisation parameter on shared paths and compare pairwise.

    Each row holds ``eps``, ``delta``, the weighted squared distance
    ``E sup_k w_k |Y^eps_k - Y^delta_k|^2`` and its square root.  The fitted
    slopes regress log-distance on ``log(eps + delta)``; they are NaN when
    any distance is at or below ``floor``.
    """
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 3:
        raise ValueError("penalization_sweep needs at least three eps values")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be sorted in decreasing order")
    lam = p.constants.lam if lam is None else lam
    mu = p.constants.mu if mu is None else mu
    w = _weights(paths, lam, mu)
    sols = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for e in eps_list:
            sols[e] = solve_backward(p, paths, SolverConfig(**{**cfg.__dict__, "eps": e}))
    rows = []
    for a, b in itertools.combinations(eps_list, 2):
        d2 = float(np.sum(np.max(w * (sols[a].Y - sols[b].Y) ** 2, axis=0)) / paths.n_paths)
        rows.append({"eps": a, "delta": b, "sum": a + b, "distance_sq": d2, "distance": d2**0.5})
    sums = [r["sum"] for r in rows]
    d2s = [r["distance_sq"] for r in rows]
    degenerate = any(v <= floor for v in d2s)
    return {
        "rows": rows,
        "slope": float("nan") if degenerate else fit_loglog_slope(sums, [r["distance"] for r in rows]),
        "slope_sq": float("nan") if degenerate else fit_loglog_slope(sums, d2s),
        "y0": {e: sols[e].y0 for e in eps_list},
    }


def apriori_bounds_report(solution: BackwardSolution, p: ProblemSpec, lam=None, mu=None):
    """Empirical left-hand sides of the a-priori bounds and their ratios to ``M``.

    ``M`` is ``E w_N (xi^2 + phi(xi) + psi(xi)) + E sum_k w_k (eta_k^2 dt +
    gamma_k^2 dA_k)`` with ``eta_k = |f(t_k, X_k, 0, 0)|`` and
    ``gamma_k = |g(t_k, X_k, 0)|``.
    """
    paths = solution.paths
    lam = p.constants.lam if lam is None else lam
    mu = p.constants.mu if mu is None else mu
    eps = solution.eps
    grid = paths.grid
    N, dt, n = grid.n_steps, grid.dt, paths.n_paths
    w = _weights(paths, lam, mu)
    wk = w[:-1]
    dA = paths.dA
    Y, Z, U, V = solution.Y, solution.Z, solution.U, solution.V
    Yk = Y[:-1]

    def mean(a):
        return float(np.sum(a) / n)

    xi = Y[-1]
    with np.errstate(invalid="ignore"):
        m_terminal = mean(w[-1] * (xi**2 + p.phi.value(xi) + p.psi.value(xi)))
    eta2 = np.zeros((N, n))
    gam2 = np.zeros((N, n))
    zero_z = np.zeros((n, paths.X.shape[2]))
    for k in range(N):
        x = paths.X[k]
        eta2[k] = p.coeffs.f_value(grid.nodes[k], x, np.zeros(n), zero_z) ** 2
        gam2[k] = p.coeffs.g_value(grid.nodes[k], x, np.zeros(n)) ** 2
    M = m_terminal + mean(np.sum(wk * (eta2 * dt + gam2 * dA), axis=0))
    phi_j = p.phi.value(p.phi.resolvent(eps, Yk))
    psi_j = p.psi.value(p.psi.resolvent(eps, Yk))
    lhs = {
        "sup_weighted_Y2": mean(np.max(w * Y**2, axis=0)),
        "int_Y2_dt": mean(np.sum(wk * Yk**2 * dt, axis=0)),
        "int_Z2_dt": mean(np.sum(wk * np.sum(Z**2, axis=2) * dt, axis=0)),
        "int_Y2_dA": mean(np.sum(wk * Yk**2 * dA, axis=0)),
        "int_U2_dt_V2_dA": mean(np.sum(wk * (U**2 * dt + V**2 * dA), axis=0)),
        "int_phiJ_dt_psiJ_dA": mean(np.sum(wk * (phi_j * dt + psi_j * dA), axis=0)),
    }
    lhs["ineg1_total"] = lhs["sup_weighted_Y2"] + lhs["int_Y2_dt"] + lhs["int_Z2_dt"] + lhs["int_Y2_dA"]
    ratios = {k: (v / M if M > 0 else (0.0 if v == 0 else float("inf"))) for k, v in lhs.items()}
    return {"M": M, "lhs": lhs, "ratios": ratios}
