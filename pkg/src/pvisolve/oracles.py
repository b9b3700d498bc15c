"""Deterministic reference solutions.

None of these share numerics with the Monte Carlo pipeline beyond the convex
toolkit: a cosine series for the Neumann heat problem on ``[0, 1]``, a
theta-scheme finite-difference solver for penalised problems in one space
dimension, and an ODE integrator for zero-noise backward equations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct
from scipy.interpolate import RegularGridInterpolator
from scipy.linalg import solve_banded

from .convex import backward_prox_step
from .exceptions import ShapeError, StabilityError
from .problem import IntervalDomain, ProblemSpec

__all__ = [
    "neumann_heat_series",
    "cosine_coefficients",
    "FdGrid",
    "solve_penalized_fd",
    "Trajectory",
    "solve_deterministic_vi",
    "compare",
]


def neumann_heat_series(x, t, mode_coeffs, n_terms=None):
    """``sum_k c_k exp(-k^2 pi^2 t / 2) cos(k pi x)`` on ``[0, 1]``.

    Returns ``(value, tail_bound)`` where ``tail_bound`` bounds the dropped
    modes ``k >= n_terms`` of ``mode_coeffs`` (zero when none are dropped).
    """
    c = np.asarray(mode_coeffs, dtype=float)
    n = c.size if n_terms is None else min(int(n_terms), c.size)
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)):
        raise ValueError("x must lie in [0, 1]")
    if t < 0:
        raise ValueError("t must be nonnegative")
    k = np.arange(c.size)
    decay = np.exp(-(k**2) * np.pi**2 * t / 2.0)
    kk = k[:n]
    value = np.tensordot(np.cos(np.pi * np.multiply.outer(x, kk)), c[:n] * decay[:n], axes=([-1], [0]))
    tail = float(np.sum(np.abs(c[n:]) * decay[n:]))
    return (float(value) if np.ndim(value) == 0 else value), tail


def cosine_coefficients(h, n_terms, n_quad=4096):
    """Cosine coefficients of ``h`` on ``[0, 1]`` from midpoint samples (DCT-II)."""
    xm = (np.arange(n_quad) + 0.5) / n_quad
    c = dct(np.asarray(h(xm), dtype=float), type=2) / n_quad
    c[0] /= 2.0
    return c[:n_terms]


@dataclass
class FdGrid:
    """Finite-difference solution ``u[m, j]`` at ``t[m]``, ``x[j]``."""

    x: np.ndarray
    t: np.ndarray
    u: np.ndarray
    theta: float
    eps: float
    info: dict = field(default_factory=dict)

    @property
    def dx(self):
        return self.x[1] - self.x[0]

    @property
    def dt(self):
        return self.t[1] - self.t[0]

    def value(self, t, x):
        interp = RegularGridInterpolator((self.t, self.x), self.u)
        return interp(np.column_stack(np.broadcast_arrays(t, x)))

    def weighted_mean(self, m):
        """Trapezoid mean of ``u[m]`` over the interval."""
        w = np.full(self.x.size, 1.0)
        w[0] = w[-1] = 0.5
        return float(np.sum(w * self.u[m]) / np.sum(w))


def _scalar_field(vals, n):
    return np.broadcast_to(np.asarray(vals, dtype=float), (n,))


def solve_penalized_fd(p: ProblemSpec, eps, nx, nt, theta=1.0) -> FdGrid:
    """Theta-scheme for ``u_t = L u - grad phi_eps(u) + f`` with penalised Neumann rows.

    ``f`` is explicit (previous level, ``z = sigma u_x``), the generator is
    theta-weighted with ghost nodes, the boundary relation
    ``du/dn + grad psi_eps(u) = g`` is enforced with ``g`` explicit and a
    prox step on the boundary values, and ``phi`` is applied last by an exact
    prox step on every node.
    """
    if not 0.5 <= theta <= 1.0:
        raise StabilityError(f"theta must lie in [1/2, 1], got {theta}")
    dom = p.domain
    if not isinstance(dom, IntervalDomain):
        raise ShapeError("the finite-difference oracle requires a one-dimensional interval")
    x = np.linspace(dom.left, dom.right, nx + 1)
    t = np.linspace(0.0, p.T, nt + 1)
    dx, dt = x[1] - x[0], t[1] - t[0]
    co = p.coeffs
    X = x[:, None]
    u = np.empty((nt + 1, nx + 1))
    u[0] = co.h_value(X)

    def operator(tm):
        s = _scalar_field(co.sigma(tm, X)[:, 0, 0], nx + 1)
        b = _scalar_field(co.b(tm, X)[:, 0], nx + 1)
        a = 0.5 * s**2 / dx**2
        c = b / (2 * dx)
        lower = a - c  # coefficient of u_{j-1}
        upper = a + c  # coefficient of u_{j+1}
        diag = -2 * a
        # ghost nodes fold into the neighbour coefficient
        upper0, lower_n = lower[0] + upper[0], lower[-1] + upper[-1]
        kappa_l = s[0] ** 2 / dx - b[0]
        kappa_r = s[-1] ** 2 / dx + b[-1]
        return s, diag, lower, upper, upper0, lower_n, kappa_l, kappa_r

    def apply(op, v):
        _, diag, lower, upper, upper0, lower_n, _, _ = op
        out = diag * v
        out[1:-1] += lower[1:-1] * v[:-2] + upper[1:-1] * v[2:]
        out[0] += upper0 * v[1]
        out[-1] += lower_n * v[-2]
        return out

    min_kappa = np.inf
    for m in range(nt):
        tm = t[m]
        th = tm + theta * dt
        op_old = operator(tm)
        op_new = operator(th)
        s_old = op_old[0]
        v = u[m]
        kl, kr = op_old[6], op_old[7]
        min_kappa = min(min_kappa, op_new[6], op_new[7])
        if min(op_new[6], op_new[7]) < 0:
            raise StabilityError("boundary coefficient sigma^2/dx -+ b is negative; refine nx")
        ends = X[[0, -1]]
        g = co.g_value(tm, ends, v[[0, -1]])
        flux = np.zeros(nx + 1)
        flux[0] = kl * g[0]
        flux[-1] = kr * g[1]
        ux = np.empty(nx + 1)
        ux[1:-1] = (v[2:] - v[:-2]) / (2 * dx)
        vpsi = p.psi.yosida(eps, v[[0, -1]])
        ux[0] = -(g[0] - vpsi[0])
        ux[-1] = g[1] - vpsi[1]
        f = co.f_value(tm, X, v, (s_old * ux)[:, None])
        rhs = v + (1 - theta) * dt * apply(op_old, v) + dt * f + dt * flux
        _, diag, lower, upper, upper0, lower_n, kl_new, kr_new = op_new
        ab = np.zeros((3, nx + 1))
        ab[1] = 1 - theta * dt * diag
        ab[0, 1:] = -theta * dt * upper[:-1]
        ab[0, 1] = -theta * dt * upper0
        ab[2, :-1] = -theta * dt * lower[1:]
        ab[2, -2] = -theta * dt * lower_n
        w = solve_banded((1, 1), ab, rhs)
        if not p.psi.is_zero:
            w[0] = backward_prox_step(p.psi, eps, dt * kl_new, w[0])
            w[-1] = backward_prox_step(p.psi, eps, dt * kr_new, w[-1])
        u[m + 1] = backward_prox_step(p.phi, eps, dt, w)
    return FdGrid(x, t, u, theta, eps, {"min_boundary_coefficient": float(min_kappa)})


@dataclass
class Trajectory:
    """Zero-noise backward solution on the grid ``t``; ``U``, ``V`` have one entry per step."""

    t: np.ndarray
    X: np.ndarray
    A: np.ndarray
    Y: np.ndarray
    U: np.ndarray
    V: np.ndarray
    exact: bool = False


def _reflected_ode(p: ProblemSpec, t, x0):
    """RK4 for ``x' = b(t, x)`` with projection onto the closed domain after each step."""
    n = t.size - 1
    d = p.dim
    X = np.empty((n + 1, d))
    A = np.zeros(n + 1)
    X[0] = x0
    dom = p.domain

    def b(s, x):
        return p.coeffs.b(s, x[None, :])[0]

    for k in range(n):
        h = t[k + 1] - t[k]
        x = X[k]
        k1 = b(t[k], x)
        k2 = b(t[k] + h / 2, x + h / 2 * k1)
        k3 = b(t[k] + h / 2, x + h / 2 * k2)
        k4 = b(t[k + 1], x + h * k3)
        xn = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        A[k + 1] = A[k]
        if dom.level(xn[None, :])[0] > 0:
            proj = dom.nearest_boundary_point(xn[None, :])[0]
            A[k + 1] += float(np.linalg.norm(xn - proj))
            xn = proj
        X[k + 1] = xn
    return X, A


def solve_deterministic_vi(p: ProblemSpec, x0, nt, eps=None, exact=False, t0=0.0) -> Trajectory:
    """Integrate the zero-noise backward equation on ``[t0, T]`` from ``Y_T = h(X_T)``.

    Penalised mode (``eps`` given): Strang splitting, half prox step of
    ``phi``, an RK4 step of ``y' = -f``, the boundary update ``y += dA g``
    followed by a prox step of ``psi`` with step ``dA``, and a second half
    prox step.  Exact mode projects onto the domains of indicator functions
    (active-set switching) and recovers the fluxes from the projection
    distance.
    """
    if not p.coeffs.sigma_is_zero():
        raise ValueError("solve_deterministic_vi requires sigma == 0")
    if exact:
        for f in (p.phi, p.psi):
            if not (f.is_zero or f.is_indicator):
                raise ValueError("exact mode supports indicator or zero convex functions only")
    elif eps is None or not eps > 0:
        raise ValueError("penalised mode needs eps > 0")
    t = np.linspace(t0, p.T, nt + 1)
    x0 = np.asarray(x0, dtype=float).reshape(p.dim)
    X, A = _reflected_ode(p, t, x0)
    dA = np.diff(A)
    co = p.coeffs
    zero_z = np.zeros((1, p.dim))
    Y = np.empty(nt + 1)
    U = np.zeros(nt)
    V = np.zeros(nt)
    Y[-1] = co.h_value(X[-1][None, :])[0]

    def drive(s, x, y):
        return co.f_value(s, x[None, :], np.array([y]), zero_z)[0]

    for k in range(nt - 1, -1, -1):
        h = t[k + 1] - t[k]
        s1, s0 = t[k + 1], t[k]
        y = Y[k + 1]
        if not exact:
            y = float(backward_prox_step(p.phi, eps, h / 2, y))
            pushed = Y[k + 1] - y
        # integrate dy/ds = -f backwards from s1 to s0, the path taken at the left node
        xk = X[k]
        k1 = drive(s1, xk, y)
        k2 = drive(s1 - h / 2, xk, y + h / 2 * k1)
        k3 = drive(s1 - h / 2, xk, y + h / 2 * k2)
        k4 = drive(s0, xk, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if dA[k] > 0:
            y = y + dA[k] * co.g_value(s0, xk[None, :], np.array([y]))[0]
            if exact:
                lo, hi = p.psi.domain_bounds()
                yp = min(max(y, lo), hi)
                V[k] = (y - yp) / dA[k]
                y = yp
            else:
                yp = float(backward_prox_step(p.psi, eps, dA[k], y))
                V[k] = (y - yp) / dA[k]
                y = yp
        if exact:
            lo, hi = p.phi.domain_bounds()
            yp = min(max(y, lo), hi)
            U[k] = (y - yp) / h
            y = yp
        else:
            yp = float(backward_prox_step(p.phi, eps, h / 2, y))
            # mean flux of the two half steps, so that Y_k = Y_{k+1} + int f - h U_k
            U[k] = (pushed + y - yp) / h
            y = yp
        Y[k] = y
    return Trajectory(t, X, A, Y, U, V, exact)


def _as_table(obj):
    """``(axes, values)`` with axes a tuple of 1D node arrays."""
    from .feynman_kac import SolutionGrid

    if isinstance(obj, FdGrid):
        return (obj.t, obj.x), obj.u
    if isinstance(obj, Trajectory):
        return (obj.t,), obj.Y
    if isinstance(obj, SolutionGrid):
        if obj.points.shape[1] != 1:
            raise ShapeError("compare supports one space dimension")
        order = np.argsort(obj.points[:, 0])
        return (obj.times, obj.points[order, 0]), obj.values[:, order]
    if isinstance(obj, tuple) and len(obj) == 2:
        axes, vals = obj
        axes = tuple(np.asarray(a, dtype=float) for a in axes)
        return axes, np.asarray(vals, dtype=float)
    raise TypeError(f"cannot compare objects of type {type(obj).__name__}")


def _interp(axes, vals, query):
    """Linear interpolation; singleton axes must match the query exactly."""
    keep = [i for i, a in enumerate(axes) if a.size > 1]
    sel = vals
    for i, a in enumerate(axes):
        if a.size == 1:
            if not np.allclose(query[:, i], a[0], rtol=0, atol=1e-12):
                raise ShapeError("query outside a single-node axis")
    if not keep:
        return np.full(query.shape[0], float(np.ravel(sel)[0]))
    sel = vals.reshape([a.size for a in axes if a.size > 1])
    interp = RegularGridInterpolator(tuple(axes[i] for i in keep), sel)
    return interp(query[:, keep])


def compare(a, b):
    """Sup and root-mean-square gaps between two gridded solutions.

    The grid with fewer nodes is the evaluation grid; the other solution is
    linearly interpolated onto it.  Nodes outside the other's support are
    dropped; if none remain a :class:`ShapeError` is raised.
    """
    axes_a, va = _as_table(a)
    axes_b, vb = _as_table(b)
    if len(axes_a) != len(axes_b):
        raise ShapeError("cannot compare grids of different rank")
    if va.size > vb.size:
        axes_a, va, axes_b, vb = axes_b, vb, axes_a, va
        swapped = True
    else:
        swapped = False
    mesh = np.meshgrid(*axes_a, indexing="ij")
    query = np.column_stack([m.ravel() for m in mesh])
    inside = np.ones(query.shape[0], dtype=bool)
    for i, ax in enumerate(axes_b):
        inside &= (query[:, i] >= ax.min() - 1e-12) & (query[:, i] <= ax.max() + 1e-12)
    if not np.any(inside):
        raise ShapeError("grids have disjoint supports")
    q = query[inside]
    for i, ax in enumerate(axes_b):
        q[:, i] = np.clip(q[:, i], ax.min(), ax.max())
    other = _interp(axes_b, vb, q)
    mine = va.ravel()[inside]
    diff = mine - other if not swapped else other - mine
    table = [{"node": q[j].tolist(), "a": float(mine[j] if not swapped else other[j]),
              "b": float(other[j] if not swapped else mine[j]), "diff": float(diff[j])}
             for j in range(q.shape[0])]
    return {
        "sup": float(np.max(np.abs(diff))),
        "l2": float(np.sqrt(np.mean(diff**2))),
        "n_nodes": int(q.shape[0]),
        "nodes": table,
    }
