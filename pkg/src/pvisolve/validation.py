"""Sampling-based checks of the structural hypotheses on a problem.

Every check draws scrambled Sobol samples, so a report is a deterministic
function of the problem and the seed.  Violations are report entries, never
exceptions.  Margins are signed so that a positive margin means violated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .exceptions import EvalError
from .problem import ProblemSpec

__all__ = [
    "CheckResult",
    "ValidationReport",
    "validate_assumptions",
    "check_compatibility",
    "uniqueness_hypotheses_check",
]

TOL = 1e-9
NORMAL_TOL = 1e-8


@dataclass
class CheckResult:
    name: str
    value: float
    bound: float
    passed: bool
    detail: str = ""

    def to_dict(self):
        return {"name": self.name, "value": _num(self.value), "bound": _num(self.bound),
                "passed": bool(self.passed), "detail": self.detail}


@dataclass
class ValidationReport:
    title: str
    checks: list = field(default_factory=list)

    @property
    def ok(self):
        return all(c.passed for c in self.checks)

    def failed(self):
        return [c.name for c in self.checks if not c.passed]

    def get(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def add(self, name, value, bound, detail=""):
        passed = bool(np.isfinite(value)) and value <= bound
        self.checks.append(CheckResult(name, float(value), float(bound), passed, detail))

    def to_dict(self):
        return {"title": self.title, "ok": self.ok, "checks": [c.to_dict() for c in self.checks]}


def _num(v):
    v = float(v)
    if np.isnan(v):
        return "nan"
    if np.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


class _Sampler:
    """Sobol draws for ``t``, ``y``, ``z`` and points of the closed domain."""

    def __init__(self, p: ProblemSpec, n, seed, y_range, z_range):
        self.p = p
        self.n = n
        self.d = p.dim
        self.seed = seed
        self.y_range = y_range
        self.z_range = z_range
        self._count = 0

    def _sobol(self, dims):
        self._count += 1
        eng = qmc.Sobol(dims, scramble=True, seed=np.random.default_rng([self.seed, self._count]))
        m = int(np.ceil(np.log2(max(self.n, 2))))
        return eng.random_base2(m)[: self.n]

    def scalars(self, lo, hi, k=1):
        return lo + (hi - lo) * self._sobol(k)

    def t(self):
        return self.scalars(0.0, self.p.T)[:, 0]

    def y(self):
        return self.scalars(*self.y_range)[:, 0]

    def z(self):
        return self.scalars(*self.z_range, k=self.d)

    def box(self, pad=0.1):
        lo, hi = self.p.domain.bounding_box()
        w = hi - lo
        return self.scalars(0.0, 1.0, k=self.d) * (w + 2 * pad * w) + (lo - pad * w)

    def interior(self):
        dom = self.p.domain
        lo, hi = dom.bounding_box()
        pts = np.empty((0, self.d))
        tries = 0
        while pts.shape[0] < self.n and tries < 50:
            cand = lo + (hi - lo) * self._sobol(self.d)
            pts = np.vstack([pts, cand[dom.level(cand) <= 0]])
            tries += 1
        return pts[: self.n]

    def boundary(self):
        rng = np.random.default_rng([self.seed, 7919])
        return self.p.domain.sample_boundary(self.n, rng)


def _safe(fun, *args):
    with np.errstate(all="ignore"):
        return np.asarray(fun(*args), dtype=float)


def _sup(values):
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return 0.0
    if np.any(np.isnan(values)):
        return float("inf")
    return float(np.max(values))


def _finite_check(report, name, arrays):
    bad = sum(int(np.sum(~np.isfinite(a))) for a in arrays)
    report.add(name, float(bad), 0.0, f"{bad} non-finite evaluations")


@np.errstate(all="ignore")
def validate_assumptions(p: ProblemSpec, n_samples=1024, seed=0, y_range=(-10.0, 10.0),
                         z_range=(-10.0, 10.0)) -> ValidationReport:
    """Empirical quotients for the continuity, Lipschitz, monotonicity and growth hypotheses.

    Each entry compares the sampled supremum of a quotient with the declared
    constant (``L``, ``alpha``, ``beta``, ``gamma``) plus a small tolerance.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    c = p.constants
    co = p.coeffs
    s = _Sampler(p, n_samples, seed, y_range, z_range)
    rep = ValidationReport("assumptions")
    t = s.t()
    x_in = s.interior()
    n_in = x_in.shape[0]
    t_in = t[:n_in]
    x_bd = s.boundary()
    y1, y2 = s.y(), s.y()
    z1, z2 = s.z(), s.z()
    zero_z = np.zeros_like(z1)

    try:
        b_in = _safe(co.b, t_in, x_in)
        s_in = _safe(co.sigma, t_in, x_in)
        f_in = _safe(co.f_value, t_in, x_in, y1[:n_in], z1[:n_in])
        g_bd = _safe(co.g_value, t, x_bd, y1)
        h_all = _safe(co.h_value, np.vstack([x_in, x_bd]))
        _finite_check(rep, "h1:finite", [b_in, s_in, f_in, g_bd, h_all])
    except EvalError as exc:
        rep.add("h1:finite", float("inf"), 0.0, str(exc))

    xa, xb = s.box(), s.box()
    near = xa + 1e-3 * (s.box() - xa)
    lip = []
    for other in (xb, near):
        dx = np.linalg.norm(xa - other, axis=1)
        db = np.linalg.norm(_safe(co.b, t, xa) - _safe(co.b, t, other), axis=1)
        ds = np.linalg.norm(_safe(co.sigma, t, xa) - _safe(co.sigma, t, other), axis=(1, 2), ord=2)
        ok = dx > 0
        lip.append((db[ok] + ds[ok]) / dx[ok])
    rep.add("h2:lipschitz_b_sigma", _sup(np.concatenate(lip)), c.L + TOL * max(1.0, c.L),
            "sup (|b(x)-b(x')| + |sigma(x)-sigma(x')|) / |x-x'|")

    def mono(vals1, vals2, ya, yb):
        dy = ya - yb
        ok = dy != 0
        return (dy[ok] * (vals1[ok] - vals2[ok])) / dy[ok] ** 2

    ya, yb = y1[:n_in], y2[:n_in]
    za = z1[:n_in]
    yn = ya + 1e-3 * (yb - ya)
    q_f = np.concatenate([
        mono(_safe(co.f_value, t_in, x_in, ya, za), _safe(co.f_value, t_in, x_in, yb, za), ya, yb),
        mono(_safe(co.f_value, t_in, x_in, ya, za), _safe(co.f_value, t_in, x_in, yn, za), ya, yn),
    ])
    rep.add("h3-i:monotone_f", _sup(q_f), c.alpha + TOL * max(1.0, abs(c.alpha)),
            "sup (y-y')(f(y)-f(y'))/|y-y'|^2")

    zb = z2[:n_in]
    dz = np.linalg.norm(za - zb, axis=1)
    okz = dz > 0
    q_z = np.abs(_safe(co.f_value, t_in, x_in, ya, za) - _safe(co.f_value, t_in, x_in, ya, zb))[okz] / dz[okz]
    rep.add("h3-ii:lipschitz_f_z", _sup(q_z), c.beta + TOL * max(1.0, c.beta),
            "sup |f(z)-f(z')|/|z-z'|")

    q_gf = np.abs(_safe(co.f_value, t_in, x_in, ya, zero_z[:n_in])) / (1.0 + np.abs(ya))
    rep.add("h3-iii:growth_f", _sup(q_gf), c.gamma + TOL * max(1.0, c.gamma), "sup |f(y,0)|/(1+|y|)")

    yn_b = y1 + 1e-3 * (y2 - y1)
    q_g = np.concatenate([
        mono(_safe(co.g_value, t, x_bd, y1), _safe(co.g_value, t, x_bd, y2), y1, y2),
        mono(_safe(co.g_value, t, x_bd, y1), _safe(co.g_value, t, x_bd, yn_b), y1, yn_b),
    ])
    rep.add("h3-iv:monotone_g", _sup(q_g), c.alpha + TOL * max(1.0, abs(c.alpha)),
            "sup (y-y')(g(y)-g(y'))/|y-y'|^2 on the boundary")

    q_gg = np.abs(_safe(co.g_value, t, x_bd, y1)) / (1.0 + np.abs(y1))
    rep.add("h3-v:growth_g", _sup(q_gg), c.gamma + TOL * max(1.0, c.gamma), "sup |g(y)|/(1+|y|)")

    ys = np.concatenate([y1, [0.0]])
    with np.errstate(invalid="ignore"):
        low = min(float(np.min(p.phi.value(ys))), float(np.min(p.psi.value(ys))))
    at0 = abs(float(p.phi.value(np.zeros(1))[0])) + abs(float(p.psi.value(np.zeros(1))[0]))
    rep.add("h4:normalised", max(-low, at0), 0.0, "phi, psi >= 0 with phi(0) = psi(0) = 0")

    rep.add("h5:datum_bound", 0.0 if np.isfinite(p.datum_bound) else float("inf"), 0.0,
            f"M = {p.datum_bound!r}")

    grad = p.domain.gradient(x_bd)
    defect = np.abs(np.linalg.norm(grad, axis=1) - 1.0)
    rep.add("normal:unit_gradient", _sup(defect), NORMAL_TOL, "max ||grad level| - 1| on boundary samples")
    return rep


@np.errstate(all="ignore")
def check_compatibility(p: ProblemSpec, eps_list=(1e-1, 1e-2, 1e-3), n_samples=1024, seed=0,
                        y_range=(-10.0, 10.0), z_range=(-10.0, 10.0)) -> ValidationReport:
    """Worst margins of the three compatibility conditions, per ``eps``.

    ``comp-i``: ``-U V``;  ``h6-i``: ``U g - [V g]^+``;  ``h6-ii``:
    ``V f - [U f]^+``, with ``U``, ``V`` the Yosida gradients of ``phi``,
    ``psi``.  ``g`` is sampled on the boundary and ``f`` on the closed domain.
    """
    if any(not e > 0 for e in eps_list):
        raise ValueError("all eps must be positive")
    co = p.coeffs
    s = _Sampler(p, n_samples, seed, y_range, z_range)
    t = s.t()
    x_bd = s.boundary()
    x_in = s.interior()
    n_in = x_in.shape[0]
    y = s.y()
    z = s.z()
    # make sure the edges of the indicator domains are probed
    edges = [v for f in (p.phi, p.psi) for v in f.domain_bounds() if np.isfinite(v)]
    extra = np.array([v + d for v in edges for d in (-1e-3, 0.0, 1e-3)])[: y.size]
    y[: extra.size] = extra
    g = _safe(co.g_value, t, x_bd, y)
    f = _safe(co.f_value, t[:n_in], x_in, y[:n_in], z[:n_in])
    rep = ValidationReport("compatibility")
    for eps in eps_list:
        U = p.phi.yosida(eps, y)
        V = p.psi.yosida(eps, y)
        Ui, Vi = U[:n_in], V[:n_in]
        rep.add(f"comp-i[eps={eps:g}]", _sup(-U * V), 0.0, "U V >= 0")
        rep.add(f"h6-i[eps={eps:g}]", _sup(U * g - np.maximum(V * g, 0.0)), 0.0, "U g <= [V g]^+")
        rep.add(f"h6-ii[eps={eps:g}]", _sup(Vi * f - np.maximum(Ui * f, 0.0)), 0.0, "V f <= [U f]^+")
    return rep


@np.errstate(all="ignore")
def uniqueness_hypotheses_check(p: ProblemSpec, n_samples=1024, seed=0, y_range=(-10.0, 10.0),
                                z_range=(-10.0, 10.0)) -> ValidationReport:
    """``g`` nonincreasing in ``y`` (h8) and finite x-modulus quotient of ``f`` (h7)."""
    co = p.coeffs
    s = _Sampler(p, n_samples, seed, y_range, z_range)
    t = s.t()
    x_bd = s.boundary()
    y1, y2 = s.y(), s.y()
    lo, hi = np.minimum(y1, y2), np.maximum(y1, y2)
    ok = hi > lo
    slope = (_safe(co.g_value, t, x_bd, hi) - _safe(co.g_value, t, x_bd, lo))[ok] / (hi - lo)[ok]
    rep = ValidationReport("uniqueness")
    rep.add("h8:g_decreasing", _sup(slope), TOL, "sup (g(y') - g(y))/(y' - y) for y < y'")

    xa, xb = s.interior(), s.interior()
    n = min(xa.shape[0], xb.shape[0])
    xa, xb = xa[:n], xb[:n]
    z = s.z()[:n]
    r = y1[:n]
    dx = np.linalg.norm(xa - xb, axis=1)
    good = dx > 0
    num = np.abs(_safe(co.f_value, t[:n], xa, r, z) - _safe(co.f_value, t[:n], xb, r, z))
    q = num[good] / (dx[good] * (1.0 + np.linalg.norm(z[good], axis=1)))
    sup = _sup(q)
    rep.checks.append(CheckResult("h7:f_x_modulus", sup, float("inf"), bool(np.isfinite(sup)),
                                  "sup |f(x)-f(x')|/(|x-x'|(1+|z|)); finiteness heuristic"))
    return rep
