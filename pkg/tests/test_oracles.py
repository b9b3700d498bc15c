import math

import numpy as np
import pytest

from pvisolve import BallDomain, Coefficients, IntervalDomain, ProblemSpec
from pvisolve.bsvi import fit_loglog_slope
from pvisolve.convex import HalfLineLower
from pvisolve.exceptions import ShapeError, StabilityError
from pvisolve.oracles import (
    compare,
    cosine_coefficients,
    neumann_heat_series,
    solve_deterministic_vi,
    solve_penalized_fd,
)

from .conftest import HEAT_H

# frozen output of the single-mode series at (x, t) = (0.25, 0.5)
HEAT_REF = 0.05996617111266305


def test_series_examples():
    assert neumann_heat_series(0.3, 0.7, [1.0])[0] == 1.0
    xs = np.linspace(0, 1, 11)
    v, tail = neumann_heat_series(xs, 0.0, [0.0, 1.0])
    np.testing.assert_array_equal(v, np.cos(np.pi * xs))
    assert tail == 0.0
    v, _ = neumann_heat_series(0.25, 0.5, [0.0, 1.0])
    assert v == pytest.approx(HEAT_REF, abs=1e-15)
    assert v == pytest.approx(math.exp(-math.pi**2 / 4) * math.cos(math.pi / 4), rel=1e-14)


def test_series_decay_and_tail():
    c = np.ones(6)
    dt = 0.01
    for k in range(1, 6):
        a, _ = neumann_heat_series(0.0, 0.3, np.eye(6)[k])
        b, _ = neumann_heat_series(0.0, 0.3 + dt, np.eye(6)[k])
        assert b / a == pytest.approx(math.exp(-k * k * math.pi**2 * dt / 2), rel=1e-12)
    full, _ = neumann_heat_series(0.4, 0.1, c)
    part, tail = neumann_heat_series(0.4, 0.1, c, n_terms=3)
    assert abs(full - part) <= tail


def test_cosine_coefficients():
    c = cosine_coefficients(lambda x: 2.0 + np.cos(np.pi * x) - 0.5 * np.cos(3 * np.pi * x), 5)
    np.testing.assert_allclose(c, [2.0, 1.0, 0.0, -0.5, 0.0], atol=1e-12)


def _heat(**kw):
    co = dict(b=0.0, sigma=1.0, h=HEAT_H)
    co.update(kw)
    return ProblemSpec(IntervalDomain(0, 1), Coefficients.from_values(1, **co), T=0.5)


def test_fd_heat_matches_series():
    fd = solve_penalized_fd(_heat(), 1e-3, 200, 400, theta=0.5)
    exact, _ = neumann_heat_series(fd.x, 0.5, [0.0, 1.0])
    assert np.max(np.abs(fd.u[-1] - exact)) <= 1e-3


def test_fd_mean_conservation():
    p = ProblemSpec(IntervalDomain(0, 1), Coefficients.from_values(1, sigma=0.7, h="x1^2 + sin(5*x1)"), T=0.5)
    fd = solve_penalized_fd(p, 1e-3, 80, 100, theta=0.5)
    means = [fd.weighted_mean(m) for m in range(fd.t.size)]
    assert np.max(np.abs(np.diff(means))) <= 1e-10


def test_fd_first_order_in_time():
    p = _heat()
    ref = solve_penalized_fd(p, 1e-3, 100, 6400, theta=1.0).u[-1]
    errs = [np.max(np.abs(solve_penalized_fd(p, 1e-3, 100, nt, theta=1.0).u[-1] - ref)) for nt in (50, 100, 200)]
    for a, b in zip(errs, errs[1:]):
        assert 0.4 <= b / a <= 0.6


def test_fd_obstacle():
    p = ProblemSpec(IntervalDomain(-1, 1), Coefficients.from_values(1, sigma=0.0, f=-1.0, h=0.0),
                    phi=HalfLineLower(0.0))
    for eps in (1e-2, 1e-4):
        fd = solve_penalized_fd(p, eps, 40, 200)
        assert np.max(np.abs(fd.u)) <= 1e-12 + 2 * math.sqrt(eps)
        assert np.min(fd.u) >= -2 * math.sqrt(eps)
    p1 = ProblemSpec(IntervalDomain(-1, 1), Coefficients.from_values(1, sigma=1.0, f=-1.0, h="x1^2"),
                     phi=HalfLineLower(0.0))
    fd = solve_penalized_fd(p1, 1e-3, 100, 200)
    assert np.min(fd.u) >= -2 * math.sqrt(1e-3)


def test_fd_errors():
    with pytest.raises(StabilityError):
        solve_penalized_fd(_heat(), 1e-3, 20, 20, theta=0.4)
    ball = ProblemSpec(BallDomain((0.0, 0.0), 1.0), Coefficients.from_values(2, h=0.0))
    with pytest.raises(ShapeError):
        solve_penalized_fd(ball, 1e-3, 20, 20)


def _det(**kw):
    co = dict(sigma=0.0, h=0.0)
    phi = kw.pop("phi", None)
    co.update(kw)
    extra = {} if phi is None else {"phi": phi}
    return ProblemSpec(IntervalDomain(-1, 1), Coefficients.from_values(1, **co), **extra)


def test_vi_linear():
    tr = solve_deterministic_vi(_det(f="-y", h=1.0), [0.0], 10_000, eps=1e-3)
    np.testing.assert_allclose(tr.Y, np.exp(-(1 - tr.t)), atol=1e-8)


def test_vi_exact_obstacle():
    tr = solve_deterministic_vi(_det(f=-1.0, phi=HalfLineLower(0.0)), [0.0], 100, exact=True)
    assert np.all(tr.Y == 0)
    np.testing.assert_allclose(tr.U, -1.0, atol=1e-12)


def test_vi_boundary_datum():
    tr = solve_deterministic_vi(_det(h=0.0, phi=HalfLineLower(0.0)), [0.5], 50, exact=True)
    assert np.all(tr.Y == 0)
    tr = solve_deterministic_vi(_det(h=0.0, phi=HalfLineLower(0.0)), [0.5], 50, eps=1e-3)
    assert np.all(tr.Y == 0)


def test_vi_penalised_vs_exact():
    p = _det(f=-1.0, phi=HalfLineLower(0.0))
    exact = solve_deterministic_vi(p, [0.0], 400, exact=True)
    eps_list = [1e-1, 1e-2, 1e-3]
    gaps = [compare(solve_deterministic_vi(p, [0.0], 400, eps=e), exact)["sup"] for e in eps_list]
    assert fit_loglog_slope(eps_list, gaps) >= 0.3
    assert all(g <= 2 * math.sqrt(e) for g, e in zip(gaps, eps_list))


def test_vi_requires_zero_noise():
    with pytest.raises(ValueError):
        solve_deterministic_vi(_heat(), [0.5], 10, eps=1e-3)


def test_compare():
    axes = (np.linspace(0, 1, 5), np.linspace(0, 1, 7))
    vals = np.add.outer(axes[0], axes[1] ** 2)
    same = compare((axes, vals), (axes, vals))
    assert same["sup"] == 0 and same["l2"] == 0
    shifted = compare((axes, vals), (axes, vals + 1.0))
    assert shifted["sup"] == pytest.approx(1.0, abs=1e-15)
    fine = (np.linspace(0, 1, 9), np.linspace(0, 1, 13))
    lin = compare((axes, np.add.outer(*axes)), (fine, np.add.outer(*fine)))
    assert lin["sup"] < 1e-12
    with pytest.raises(ShapeError):
        compare((axes, vals), ((axes[0] + 5, axes[1]), vals))
