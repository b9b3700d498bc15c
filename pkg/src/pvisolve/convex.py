"""Scalar convex analysis for the multivalued terms of the variational inequality.

Each :class:`ConvexFunction` is a proper, convex, lower semicontinuous function
on the real line normalised so that ``f(y) >= f(0) = 0``.  The catalogue is
small on purpose: every member has an exact (or safeguarded) resolvent

    J_eps(y) = (I + eps * df)^{-1}(y),

from which the Yosida approximation ``(y - J_eps(y)) / eps`` and the Moreau
envelope follow.  The Yosida gradient is equivalently the unique ``U`` with
``U in df(y - eps * U)``; both descriptions give the same map and the resolvent
form is the one implemented here.

All methods are vectorised over numpy arrays.  ``+inf`` is returned as an
explicit sentinel for points outside the effective domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .exceptions import ConfigError, ConvergenceError, DomainError

__all__ = [
    "ConvexFunction",
    "Zero",
    "HalfLineLower",
    "HalfLineUpper",
    "Interval",
    "Quadratic",
    "AbsPower",
    "PiecewiseLinearConvex",
    "ProxResult",
    "evaluate",
    "one_sided_derivatives",
    "prox",
    "backward_prox_step",
    "backward_prox_step_bisection",
    "resolvent_bisection",
    "convex_from_dict",
]

MAX_ITER = 200
TOL = 1e-12


def _out(a):
    a = np.asarray(a, dtype=float)
    return float(a) if a.ndim == 0 else a


@dataclass(frozen=True)
class ProxResult:
    """Resolvent point, Yosida gradient and Moreau envelope at one or many ``y``."""

    resolvent_point: Any
    yosida_value: Any
    envelope_value: Any


class ConvexFunction:
    """Base class; subclasses are frozen dataclasses."""

    kind: str = ""

    def value(self, y):
        raise NotImplementedError

    def derivatives(self, y):
        """Return ``(left, right)`` derivatives; caller guarantees ``y`` in Dom."""
        raise NotImplementedError

    def resolvent(self, eps, y):
        raise NotImplementedError

    # Defaults valid for every member of the catalogue; overridden where a
    # cheaper closed form exists.
    def yosida(self, eps, y):
        y = np.asarray(y, dtype=float)
        return (y - self.resolvent(eps, y)) / eps

    def yosida_slope(self, eps, y):
        """Derivative of the Yosida gradient (right derivative at kinks)."""
        y = np.asarray(y, dtype=float)
        h = 1e-7 * np.maximum(1.0, np.abs(y))
        return (self.yosida(eps, y + h) - self.yosida(eps, y)) / h

    def domain_bounds(self):
        """Closed interval hull ``(lo, hi)`` of Dom, with infinite ends allowed."""
        return -math.inf, math.inf

    @property
    def is_zero(self):
        return False

    @property
    def is_indicator(self):
        return False

    def to_dict(self):
        raise NotImplementedError


@dataclass(frozen=True)
class Zero(ConvexFunction):
    kind = "zero"

    def value(self, y):
        return np.zeros_like(np.asarray(y, dtype=float))

    def derivatives(self, y):
        z = np.zeros_like(np.asarray(y, dtype=float))
        return z, z.copy()

    def resolvent(self, eps, y):
        return np.array(y, dtype=float)

    def yosida(self, eps, y):
        return np.zeros_like(np.asarray(y, dtype=float))

    def yosida_slope(self, eps, y):
        return np.zeros_like(np.asarray(y, dtype=float))

    @property
    def is_zero(self):
        return True

    def to_dict(self):
        return {"kind": self.kind}


class _IntervalIndicator(ConvexFunction):
    """Indicator of ``[lo, hi]`` with possibly infinite ends."""

    @property
    def _lo(self):
        return -math.inf

    @property
    def _hi(self):
        return math.inf

    def domain_bounds(self):
        return self._lo, self._hi

    @property
    def is_indicator(self):
        return True

    def value(self, y):
        y = np.asarray(y, dtype=float)
        inside = (y >= self._lo) & (y <= self._hi)
        return np.where(inside, 0.0, np.inf)

    def derivatives(self, y):
        y = np.asarray(y, dtype=float)
        left = np.where(y == self._lo, -np.inf, 0.0)
        right = np.where(y == self._hi, np.inf, 0.0)
        return left, right

    def resolvent(self, eps, y):
        return np.clip(np.asarray(y, dtype=float), self._lo, self._hi)

    def yosida_slope(self, eps, y):
        y = np.asarray(y, dtype=float)
        return np.where((y < self._lo) | (y > self._hi), 1.0 / eps, 0.0)


@dataclass(frozen=True)
class HalfLineLower(_IntervalIndicator):
    """Indicator of ``[a, +inf)`` with ``a <= 0``."""

    a: float = 0.0
    kind = "half_line_lower"

    def __post_init__(self):
        if not self.a <= 0:
            raise ConfigError(f"half_line_lower needs a <= 0, got {self.a}")

    @property
    def _lo(self):
        return self.a

    def yosida(self, eps, y):
        # -(1/eps) * (y - a)^-
        y = np.asarray(y, dtype=float)
        return np.minimum(y - self.a, 0.0) / eps

    def to_dict(self):
        return {"kind": self.kind, "a": self.a}


@dataclass(frozen=True)
class HalfLineUpper(_IntervalIndicator):
    """Indicator of ``(-inf, b]`` with ``b >= 0``."""

    b: float = 0.0
    kind = "half_line_upper"

    def __post_init__(self):
        if not self.b >= 0:
            raise ConfigError(f"half_line_upper needs b >= 0, got {self.b}")

    @property
    def _hi(self):
        return self.b

    def yosida(self, eps, y):
        # (1/eps) * (y - b)^+
        y = np.asarray(y, dtype=float)
        return np.maximum(y - self.b, 0.0) / eps

    def to_dict(self):
        return {"kind": self.kind, "b": self.b}


@dataclass(frozen=True)
class Interval(_IntervalIndicator):
    """Indicator of ``[a, b]`` with ``a <= 0 <= b``."""

    a: float = -1.0
    b: float = 1.0
    kind = "interval"

    def __post_init__(self):
        if not self.a <= 0 <= self.b:
            raise ConfigError(f"interval needs a <= 0 <= b, got [{self.a}, {self.b}]")

    @property
    def _lo(self):
        return self.a

    @property
    def _hi(self):
        return self.b

    def derivatives(self, y):
        y = np.asarray(y, dtype=float)
        left = np.where(y == self.a, -np.inf, 0.0)
        right = np.where(y == self.b, np.inf, 0.0)
        return left, right

    def to_dict(self):
        return {"kind": self.kind, "a": self.a, "b": self.b}


@dataclass(frozen=True)
class Quadratic(ConvexFunction):
    """``c * y**2`` with ``c >= 0``."""

    c: float = 1.0
    kind = "quadratic"

    def __post_init__(self):
        if not self.c >= 0:
            raise ConfigError(f"quadratic needs c >= 0, got {self.c}")

    def value(self, y):
        y = np.asarray(y, dtype=float)
        return self.c * y * y

    def derivatives(self, y):
        d = 2.0 * self.c * np.asarray(y, dtype=float)
        return d, d.copy()

    def resolvent(self, eps, y):
        return np.asarray(y, dtype=float) / (1.0 + 2.0 * eps * self.c)

    def yosida(self, eps, y):
        return 2.0 * self.c * np.asarray(y, dtype=float) / (1.0 + 2.0 * eps * self.c)

    def yosida_slope(self, eps, y):
        return np.full_like(np.asarray(y, dtype=float), 2.0 * self.c / (1.0 + 2.0 * eps * self.c))

    def to_dict(self):
        return {"kind": self.kind, "c": self.c}


@dataclass(frozen=True)
class AbsPower(ConvexFunction):
    """``c * |y|**p`` with ``c >= 0`` and ``p >= 1``."""

    c: float = 1.0
    p: float = 1.0
    kind = "abs_power"

    def __post_init__(self):
        if not self.c >= 0:
            raise ConfigError(f"abs_power needs c >= 0, got {self.c}")
        if not self.p >= 1:
            raise ConfigError(f"abs_power needs p >= 1, got {self.p}")

    def value(self, y):
        return self.c * np.abs(np.asarray(y, dtype=float)) ** self.p

    def derivatives(self, y):
        y = np.asarray(y, dtype=float)
        if self.p == 1:
            s = self.c * np.sign(y)
            left = np.where(y == 0, -self.c, s)
            right = np.where(y == 0, self.c, s)
            return left, right
        d = self.c * self.p * np.sign(y) * np.abs(y) ** (self.p - 1)
        return d, d.copy()

    def resolvent(self, eps, y):
        y = np.asarray(y, dtype=float)
        if self.p == 1:
            return np.sign(y) * np.maximum(np.abs(y) - eps * self.c, 0.0)
        if self.p == 2:
            return y / (1.0 + 2.0 * eps * self.c)
        return np.sign(y) * self._solve_magnitude(eps, np.abs(y))

    def _solve_magnitude(self, eps, r):
        # w + eps*c*p*w^(p-1) = r on [0, r]; strictly increasing in w.
        k = eps * self.c * self.p
        q = self.p - 1.0
        lo = np.zeros_like(r)
        hi = r.copy()
        w = r / (1.0 + k)
        tol = TOL * np.maximum(1.0, r)
        for _ in range(MAX_ITER):
            res = w + k * w**q - r
            done = np.abs(res) < tol
            if np.all(done):
                return w
            lo = np.where(res < 0, w, lo)
            hi = np.where(res > 0, w, hi)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = w - res / (1.0 + k * q * w ** (q - 1.0))
            bad = ~np.isfinite(step) | (step <= lo) | (step >= hi)
            w = np.where(done, w, np.where(bad, 0.5 * (lo + hi), step))
        raise ConvergenceError(f"abs_power resolvent did not converge in {MAX_ITER} iterations")

    def to_dict(self):
        return {"kind": self.kind, "c": self.c, "p": self.p}


@dataclass(frozen=True)
class PiecewiseLinearConvex(ConvexFunction):
    """Convex piecewise-linear function through the origin.

    ``slopes[i]`` is the slope on the ``i``-th piece, with pieces separated by
    ``breakpoints`` (so ``len(slopes) == len(breakpoints) + 1``).  The function
    is normalised by ``f(0) = 0``; the slopes around 0 must bracket 0.
    """

    breakpoints: tuple = ()
    slopes: tuple = (0.0,)
    kind = "piecewise_linear"
    _offsets: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        sl = tuple(float(s) for s in self.slopes)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "slopes", sl)
        if len(sl) != len(bp) + 1:
            raise ConfigError("piecewise_linear needs len(slopes) == len(breakpoints) + 1")
        if any(b2 <= b1 for b1, b2 in zip(bp, bp[1:])):
            raise ConfigError("piecewise_linear breakpoints must be strictly increasing")
        if any(s2 < s1 for s1, s2 in zip(sl, sl[1:])):
            raise ConfigError("piecewise_linear slopes must be nondecreasing")
        left0 = sl[int(np.searchsorted(bp, 0.0, side="left"))]
        right0 = sl[int(np.searchsorted(bp, 0.0, side="right"))]
        if not (left0 <= 0.0 <= right0):
            raise ConfigError("piecewise_linear must satisfy f(y) >= f(0) = 0 (0 in df(0))")
        object.__setattr__(self, "_offsets", tuple(self._integrate(b, bp, sl) for b in bp))

    @staticmethod
    def _integrate(y, bp, sl):
        knots = [0.0] + [b for b in bp if min(0.0, y) < b < max(0.0, y)] + [y]
        knots.sort()
        total = 0.0
        for u, v in zip(knots, knots[1:]):
            mid = 0.5 * (u + v)
            total += sl[int(np.searchsorted(bp, mid, side="right"))] * (v - u)
        return total if y >= 0 else -total

    def value(self, y):
        y = np.asarray(y, dtype=float)
        bp = np.asarray(self.breakpoints)
        sl = np.asarray(self.slopes)
        if bp.size == 0:
            return sl[0] * y
        idx = np.searchsorted(bp, y, side="right")
        # anchor each piece at its nearest knot: b_{idx-1} or b_0 for the leftmost piece
        anchor = np.where(idx > 0, bp[np.maximum(idx - 1, 0)], bp[0])
        off = np.asarray(self._offsets)[np.where(idx > 0, idx - 1, 0)]
        return off + sl[idx] * (y - anchor)

    def derivatives(self, y):
        y = np.asarray(y, dtype=float)
        bp = np.asarray(self.breakpoints)
        sl = np.asarray(self.slopes)
        left = sl[np.searchsorted(bp, y, side="left")]
        right = sl[np.searchsorted(bp, y, side="right")]
        return left, right

    def resolvent(self, eps, y):
        # J is pinned at b_j for y in [b_j + eps*s_j, b_j + eps*s_{j+1}] and
        # equals y - eps*s on piece s otherwise; count thresholds below y.
        y = np.asarray(y, dtype=float)
        eps = np.asarray(eps, dtype=float)
        bp = np.asarray(self.breakpoints)
        sl = np.asarray(self.slopes)
        if bp.size == 0:
            return y - eps * sl[0]
        y_, e_ = np.broadcast_arrays(y, eps)
        lo = bp + e_[..., None] * sl[:-1]
        hi = bp + e_[..., None] * sl[1:]
        edges = np.stack([lo, hi], axis=-1).reshape(*e_.shape, -1)
        pos = np.sum(y_[..., None] >= edges, axis=-1)
        piece = pos // 2
        on_kink = (pos % 2) == 1
        free = y_ - e_ * sl[np.minimum(piece, sl.size - 1)]
        pinned = bp[np.minimum(piece, bp.size - 1)]
        return np.where(on_kink, pinned, free)

    def to_dict(self):
        return {"kind": self.kind, "breakpoints": list(self.breakpoints), "slopes": list(self.slopes)}


_KINDS = {
    "zero": (Zero, ()),
    "half_line_lower": (HalfLineLower, ("a",)),
    "half_line_upper": (HalfLineUpper, ("b",)),
    "interval": (Interval, ("a", "b")),
    "quadratic": (Quadratic, ("c",)),
    "abs_power": (AbsPower, ("c", "p")),
    "piecewise_linear": (PiecewiseLinearConvex, ("breakpoints", "slopes")),
}


def convex_from_dict(spec):
    """Build a convex function from its tagged-object form, e.g. ``{"kind": "zero"}``."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError(f"convex function must be an object with a 'kind' tag, got {spec!r}")
    kind = spec["kind"]
    if kind not in _KINDS:
        raise ConfigError(f"unknown convex function kind {kind!r}; known: {sorted(_KINDS)}")
    cls, fields_ = _KINDS[kind]
    extra = set(spec) - {"kind", *fields_}
    if extra:
        raise ConfigError(f"unknown keys for {kind}: {sorted(extra)}")
    kwargs = {k: spec[k] for k in fields_ if k in spec}
    if kind == "piecewise_linear":
        kwargs = {k: tuple(v) for k, v in kwargs.items()}
    return cls(**kwargs)


def evaluate(f: ConvexFunction, y):
    """Value of ``f`` at ``y``; ``+inf`` exactly outside Dom(f)."""
    return _out(f.value(y))


def one_sided_derivatives(f: ConvexFunction, y):
    """Left and right derivatives at ``y``; df(y) is their interval intersected with R."""
    yv = np.asarray(y, dtype=float)
    if np.any(~np.isfinite(f.value(yv))):
        raise DomainError(f"{y!r} lies outside Dom({f.kind})")
    left, right = f.derivatives(yv)
    return _out(left), _out(right)


def prox(f: ConvexFunction, eps, y) -> ProxResult:
    """Resolvent, Yosida gradient and Moreau envelope of ``f`` at ``y``."""
    if not np.all(np.asarray(eps) > 0):
        raise ValueError(f"eps must be positive, got {eps}")
    y = np.asarray(y, dtype=float)
    j = f.resolvent(eps, y)
    u = (y - j) / eps
    env = (y - j) ** 2 / (2.0 * eps) + f.value(j)
    return ProxResult(_out(j), _out(u), _out(env))


def backward_prox_step(f: ConvexFunction, eps, h, v):
    """Solve ``y + h * grad f_eps(y) = v`` for ``y``.

    Uses ``J_eps(y) = J_{eps+h}(v)``, so that
    ``y = (eps * v + h * J_{eps+h}(v)) / (eps + h)``.  ``eps``, ``h`` and
    ``v`` broadcast against each other.
    """
    if not np.all(np.asarray(eps) > 0):
        raise ValueError(f"eps must be positive, got {eps}")
    if np.any(np.asarray(h) < 0):
        raise ValueError(f"h must be nonnegative, got {h}")
    v = np.asarray(v, dtype=float)
    if f.is_zero or (np.ndim(h) == 0 and h == 0):
        return _out(v.copy())
    y = (eps * v + h * f.resolvent(eps + h, v)) / (eps + h)
    return _out(np.where(np.asarray(h) == 0, v, y))


def _bisect(fun, lo, hi, target, tol=TOL, max_iter=MAX_ITER):
    """Vectorised bisection for an increasing ``fun`` with ``fun(lo) <= target <= fun(hi)``."""
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    scale = np.maximum(1.0, np.abs(target))
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        r = fun(mid) - target
        if np.all((np.abs(r) <= tol * scale) | (hi - lo <= 4 * np.finfo(float).eps * scale)):
            return mid
        lo = np.where(r < 0, mid, lo)
        hi = np.where(r > 0, mid, hi)
        lo = np.where(r == 0, mid, lo)
        hi = np.where(r == 0, mid, hi)
    raise ConvergenceError(f"bisection did not converge in {max_iter} iterations")


def backward_prox_step_bisection(f: ConvexFunction, eps, h, v):
    """Bisection solve of ``y + h * grad f_eps(y) = v`` (reference for the closed form)."""
    v = np.asarray(v, dtype=float)
    if np.ndim(h) == 0 and h == 0:
        return _out(v.copy())
    u = f.yosida(eps, v)
    a = v - h * u
    lo, hi = np.minimum(a, v), np.maximum(a, v)
    return _out(_bisect(lambda y: y + h * f.yosida(eps, y), lo, hi, v, max_iter=2000))


def resolvent_bisection(f: ConvexFunction, eps, y):
    """Resolvent by bisection on ``v`` of the subdifferential inclusion.

    Finds ``v`` with ``(y - v)/eps`` in ``[f'_-(v), f'_+(v)]``, using only
    ``derivatives`` and the domain hull; independent of ``f.resolvent``.
    """
    y = np.asarray(y, dtype=float)
    lo_d, hi_d = f.domain_bounds()
    lo = np.clip(np.minimum(y, 0.0), lo_d, hi_d)
    hi = np.clip(np.maximum(y, 0.0), lo_d, hi_d)
    for _ in range(4 * MAX_ITER):
        mid = 0.5 * (lo + hi)
        left, right = f.derivatives(mid)
        g = (y - mid) / eps
        # g > right -> minimiser is to the right; g < left -> to the left
        lo = np.where(g > right, mid, lo)
        hi = np.where(g < left, mid, hi)
        inside = (g >= left) & (g <= right)
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, mid, hi)
        if np.all(hi - lo <= 1e-15 * np.maximum(1.0, np.abs(y))):
            break
    return _out(0.5 * (lo + hi))
