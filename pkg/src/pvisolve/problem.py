"""Problem definition: level-set domain, coefficients, convex pair and constants."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .convex import ConvexFunction, Zero
from .exceptions import ConfigError, DomainError
from .expressions import Expression, parse_expression

__all__ = [
    "DomainSpec",
    "IntervalDomain",
    "BallDomain",
    "Coefficients",
    "AssumptionConstants",
    "ProblemSpec",
]

BOUNDARY_TOL = 1e-10


class DomainSpec:
    """Bounded domain ``{x : level(x) < 0}`` described by a C^3 level function.

    Points are passed as arrays of shape ``(n, d)``.
    """

    dim: int = 1
    reach: float = math.inf

    def level(self, x):
        raise NotImplementedError

    def gradient(self, x):
        raise NotImplementedError

    def hessian(self, x):
        raise NotImplementedError

    def nearest_boundary_point(self, y):
        """Analytic projection onto the boundary, or ``None`` if unavailable."""
        return None

    def bounding_box(self):
        raise NotImplementedError

    def diameter_bound(self):
        """Upper bound on ``|x|`` over the closed domain."""
        lo, hi = self.bounding_box()
        return float(np.max(np.maximum(np.abs(lo), np.abs(hi))) * math.sqrt(self.dim))

    def contains(self, x, tol=BOUNDARY_TOL):
        return self.level(np.atleast_2d(x)) <= tol

    def on_boundary(self, x, tol=BOUNDARY_TOL):
        return np.abs(self.level(np.atleast_2d(x))) <= tol

    def sample_interior(self, n, rng):
        """``n`` points of the closed domain by rejection from the bounding box."""
        lo, hi = self.bounding_box()
        out = []
        count = 0
        while count < n:
            cand = lo + (hi - lo) * rng.random((max(2 * n, 16), self.dim))
            cand = cand[self.level(cand) <= 0]
            out.append(cand)
            count += len(cand)
        return np.concatenate(out)[:n]

    def sample_boundary(self, n, rng):
        raise NotImplementedError

    def to_dict(self):
        raise NotImplementedError


def _smoothing_coeffs(h):
    # even polynomial c0 + c2 s^2 + c4 s^4 + c6 s^6 matching s in value and
    # first three derivatives at s = h
    powers = np.array([0, 2, 4, 6], dtype=float)
    rows = []
    for order in range(4):
        row = []
        for p in powers:
            coef = 1.0
            for j in range(order):
                coef *= p - j
            row.append(coef * h ** (p - order) if p >= order else 0.0)
        rows.append(row)
    rhs = np.array([h, 1.0, 0.0, 0.0])
    return powers, np.linalg.solve(np.array(rows), rhs)


@dataclass(frozen=True)
class IntervalDomain(DomainSpec):
    """Interval ``(left, right)`` in one dimension.

    The level function is the signed distance ``|x - m| - r`` except within
    ``r/2`` of the midpoint ``m``, where ``|x - m|`` is replaced by an even
    polynomial so that the level function is C^3 everywhere.
    """

    left: float = 0.0
    right: float = 1.0
    dim = 1

    def __post_init__(self):
        if not self.right > self.left:
            raise ConfigError(f"interval domain needs left < right, got [{self.left}, {self.right}]")

    @property
    def mid(self):
        return 0.5 * (self.left + self.right)

    @property
    def radius(self):
        return 0.5 * (self.right - self.left)

    @property
    def reach(self):
        # convex: every exterior point has a unique nearest boundary point
        return math.inf

    def _rho(self, s, order=0):
        h = 0.5 * self.radius
        exact = [s, np.ones_like(s), np.zeros_like(s)][order]
        near = s < h
        if not np.any(near):
            return exact
        powers, c = _smoothing_coeffs(h)
        sn = s[near]
        poly = np.zeros_like(sn)
        for p, ci in zip(powers, c):
            coef = 1.0
            for j in range(order):
                coef *= p - j
            if p >= order:
                poly = poly + ci * coef * sn ** (p - order)
        out = exact.copy()
        out[near] = poly
        return out

    def level(self, x):
        s = np.abs(np.asarray(x, dtype=float).reshape(-1, 1)[:, 0] - self.mid)
        return self._rho(s) - self.radius

    def gradient(self, x):
        u = np.asarray(x, dtype=float).reshape(-1, 1)[:, 0] - self.mid
        return (np.sign(u) * self._rho(np.abs(u), 1))[:, None]

    def hessian(self, x):
        u = np.asarray(x, dtype=float).reshape(-1, 1)[:, 0] - self.mid
        return self._rho(np.abs(u), 2)[:, None, None]

    def nearest_boundary_point(self, y):
        y = np.asarray(y, dtype=float).reshape(-1, 1)
        return np.where(y[:, :1] >= self.mid, self.right, self.left)

    def bounding_box(self):
        return np.array([self.left]), np.array([self.right])

    def sample_boundary(self, n, rng):
        pts = np.where(np.arange(n) % 2 == 0, self.left, self.right)
        return pts[:, None].astype(float)

    def to_dict(self):
        return {"kind": "interval", "left": self.left, "right": self.right}


@dataclass(frozen=True)
class BallDomain(DomainSpec):
    """Euclidean ball with level function ``(|x - c|^2 - r^2) / (2 r)``."""

    center: tuple = (0.0, 0.0)
    radius: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not self.radius > 0:
            raise ConfigError(f"ball radius must be positive, got {self.radius}")
        if len(self.center) < 1:
            raise ConfigError("ball center must have at least one coordinate")

    @property
    def dim(self):
        return len(self.center)

    @property
    def reach(self):
        # convex: every exterior point has a unique nearest boundary point
        return math.inf

    def level(self, x):
        u = np.atleast_2d(np.asarray(x, dtype=float)) - np.asarray(self.center)
        return (np.einsum("ij,ij->i", u, u) - self.radius**2) / (2.0 * self.radius)

    def gradient(self, x):
        return (np.atleast_2d(np.asarray(x, dtype=float)) - np.asarray(self.center)) / self.radius

    def hessian(self, x):
        n = np.atleast_2d(x).shape[0]
        return np.broadcast_to(np.eye(self.dim) / self.radius, (n, self.dim, self.dim)).copy()

    def nearest_boundary_point(self, y):
        c = np.asarray(self.center)
        u = np.atleast_2d(np.asarray(y, dtype=float)) - c
        norm = np.linalg.norm(u, axis=1, keepdims=True)
        return c + self.radius * u / norm

    def bounding_box(self):
        c = np.asarray(self.center)
        return c - self.radius, c + self.radius

    def diameter_bound(self):
        return float(np.linalg.norm(self.center) + self.radius)

    def sample_boundary(self, n, rng):
        g = rng.standard_normal((n, self.dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return np.asarray(self.center) + self.radius * g

    def to_dict(self):
        return {"kind": "ball", "center": list(self.center), "radius": self.radius}


def _as_expr(value, what):
    if isinstance(value, Expression):
        return value
    if isinstance(value, bool):
        raise ConfigError(f"{what}: expected a number or expression string")
    if isinstance(value, (int, float)):
        return parse_expression(repr(float(value)))
    if isinstance(value, str):
        return parse_expression(value)
    raise ConfigError(f"{what}: expected a number or expression string, got {value!r}")


def _env(t, x, y=None, z=None, reverse_at=None):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    t = np.asarray(t, dtype=float)
    if reverse_at is not None:
        t = reverse_at - t
    env = {"t": t}
    for i in range(x.shape[1]):
        env[f"x{i + 1}"] = x[:, i]
    if y is not None:
        env["y"] = np.asarray(y, dtype=float)
    if z is not None:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        for i in range(z.shape[1]):
            env[f"z{i + 1}"] = z[:, i]
    return env, x.shape[0]


def _full(value, n):
    return np.broadcast_to(np.asarray(value, dtype=float), (n,)).copy()


@dataclass(frozen=True)
class Coefficients:
    """Drift ``b``, diffusion ``sigma``, interior driver ``f``, boundary driver ``g``, datum ``h``.

    ``drift`` is a tuple of ``d`` expressions and ``diffusion`` a ``d x d``
    tuple of tuples.  When ``reverse_at`` is set, every time argument ``t`` is
    replaced by ``reverse_at - t`` (coefficients of the time-reversed problem).
    """

    drift: tuple
    diffusion: tuple
    f: Expression
    g: Expression
    h: Expression
    reverse_at: float | None = None

    @classmethod
    def from_values(cls, dim, b=0.0, sigma=1.0, f=0.0, g=0.0, h=0.0):
        if isinstance(b, (list, tuple)):
            drift = tuple(_as_expr(v, f"b[{i}]") for i, v in enumerate(b))
        else:
            drift = tuple(_as_expr(b, "b") for _ in range(dim))
        if isinstance(sigma, (list, tuple)):
            rows = [r if isinstance(r, (list, tuple)) else [r] for r in sigma]
            diffusion = tuple(tuple(_as_expr(v, f"sigma[{i}][{j}]") for j, v in enumerate(r))
                              for i, r in enumerate(rows))
        else:
            s = _as_expr(sigma, "sigma")
            zero = parse_expression("0.0")
            diffusion = tuple(tuple(s if i == j else zero for j in range(dim)) for i in range(dim))
        if len(drift) != dim or len(diffusion) != dim or any(len(r) != dim for r in diffusion):
            raise ConfigError(f"drift/diffusion shapes do not match dimension {dim}")
        return cls(drift, diffusion, _as_expr(f, "f"), _as_expr(g, "g"), _as_expr(h, "h"))

    @property
    def dim(self):
        return len(self.drift)

    @property
    def constant_drift(self):
        """Drift vector if it has no variables, else ``None``."""
        if any(e.variables for e in self.drift):
            return None
        return np.array([float(e()) for e in self.drift])

    @property
    def constant_diffusion(self):
        """Diffusion matrix if it has no variables, else ``None``."""
        if any(e.variables for r in self.diffusion for e in r):
            return None
        return np.array([[float(e()) for e in r] for r in self.diffusion])

    def b(self, t, x):
        env, n = _env(t, x, reverse_at=self.reverse_at)
        return np.column_stack([_full(e(**env), n) for e in self.drift])

    def sigma(self, t, x):
        env, n = _env(t, x, reverse_at=self.reverse_at)
        d = self.dim
        out = np.empty((n, d, d))
        for i in range(d):
            for j in range(d):
                out[:, i, j] = _full(self.diffusion[i][j](**env), n)
        return out

    def f_value(self, t, x, y, z):
        env, n = _env(t, x, y, z, reverse_at=self.reverse_at)
        return _full(self.f(**env), n)

    def g_value(self, t, x, y):
        env, n = _env(t, x, y, reverse_at=self.reverse_at)
        return _full(self.g(**env), n)

    def h_value(self, x):
        env, n = _env(0.0, x)
        return _full(self.h(**env), n)

    def is_autonomous(self):
        exprs = [*self.drift, *(e for r in self.diffusion for e in r), self.f, self.g]
        return not any(e.depends_on("t") for e in exprs)

    def sigma_is_zero(self):
        return all(e.variables == frozenset() and float(e()) == 0.0
                   for r in self.diffusion for e in r)

    def to_dict(self):
        return {
            "b": [e.text for e in self.drift],
            "sigma": [[e.text for e in r] for r in self.diffusion],
            "f": self.f.text,
            "g": self.g.text,
            "h": self.h.text,
        }


@dataclass(frozen=True)
class AssumptionConstants:
    """Structural constants; ``lam`` and ``mu`` weight the norms ``e^(lam t + mu A_t)``.

    If ``lam``/``mu`` are omitted they default to the smallest admissible
    values plus one.
    """

    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0
    L: float = 0.0
    lam: float | None = None
    mu: float | None = None

    def __post_init__(self):
        if self.gamma < 0 or self.L < 0:
            raise ConfigError("gamma and L must be nonnegative")
        if self.lam is None:
            object.__setattr__(self, "lam", 2 * self.alpha + 2 * self.L**2 + 2.0)
        if self.mu is None:
            object.__setattr__(self, "mu", 2 * self.beta + 2.0)
        if not self.lam > 2 * self.alpha + 2 * self.L**2 + 1:
            raise ConfigError(
                f"lambda={self.lam} must exceed 2*alpha + 2*L^2 + 1 = {2 * self.alpha + 2 * self.L**2 + 1}")
        if not self.mu > 2 * self.beta + 1:
            raise ConfigError(f"mu={self.mu} must exceed 2*beta + 1 = {2 * self.beta + 1}")

    def to_dict(self):
        return {"alpha": self.alpha, "beta": self.beta, "gamma": self.gamma, "L": self.L,
                "lambda": self.lam, "mu": self.mu}


@dataclass(frozen=True)
class ProblemSpec:
    """A complete variational-inequality instance on ``[0, T] x closure(D)``.

    Construction checks that the initial datum lies in Dom(phi) on interior
    samples and in Dom(psi) on boundary samples, and records the bound
    ``M = max |phi(h)|, |psi(h)|`` found there.
    """

    domain: DomainSpec
    coeffs: Coefficients
    phi: ConvexFunction = field(default_factory=Zero)
    psi: ConvexFunction = field(default_factory=Zero)
    T: float = 1.0
    constants: AssumptionConstants = field(default_factory=AssumptionConstants)
    datum_bound: float = field(init=False, default=0.0)

    def __post_init__(self):
        if not self.T > 0:
            raise ConfigError(f"horizon T must be positive, got {self.T}")
        if self.coeffs.dim != self.domain.dim:
            raise ConfigError(f"coefficients have dimension {self.coeffs.dim}, domain {self.domain.dim}")
        rng = np.random.default_rng(20240501)
        inner = self.domain.sample_interior(256, rng)
        bound = self.domain.sample_boundary(64, rng)
        hi = self.coeffs.h_value(inner)
        hb = self.coeffs.h_value(bound)
        vals_phi = self.phi.value(np.concatenate([hi, hb]))
        vals_psi = self.psi.value(hb)
        if not np.all(np.isfinite(vals_phi)):
            raise DomainError("initial datum h leaves Dom(phi) on sampled points of the closed domain")
        if not np.all(np.isfinite(vals_psi)):
            raise DomainError("initial datum h leaves Dom(psi) on sampled boundary points")
        m = max(float(np.max(np.abs(vals_phi), initial=0.0)), float(np.max(np.abs(vals_psi), initial=0.0)))
        object.__setattr__(self, "datum_bound", m)

    @property
    def dim(self):
        return self.domain.dim

    def time_reversed(self):
        """Same problem with coefficients evaluated at ``T - t``."""
        return replace(self, coeffs=replace(self.coeffs, reverse_at=self.T))

    def with_terminal(self, h):
        """Copy with a different datum ``h`` (expression or number)."""
        return replace(self, coeffs=replace(self.coeffs, h=_as_expr(h, "h")))

    def to_dict(self):
        return {
            "domain": self.domain.to_dict(),
            "coefficients": self.coeffs.to_dict(),
            "phi": self.phi.to_dict(),
            "psi": self.psi.to_dict(),
            "T": self.T,
            "constants": self.constants.to_dict(),
        }
