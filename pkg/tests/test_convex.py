import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pvisolve.convex import (
    AbsPower,
    HalfLineLower,
    HalfLineUpper,
    Interval,
    PiecewiseLinearConvex,
    Quadratic,
    Zero,
    backward_prox_step,
    backward_prox_step_bisection,
    convex_from_dict,
    evaluate,
    one_sided_derivatives,
    prox,
    resolvent_bisection,
)
from pvisolve.exceptions import ConfigError, DomainError

from .conftest import VARIANTS

finite = st.floats(-50, 50, allow_nan=False)
positive = st.floats(1e-3, 10.0)


def test_evaluate_examples():
    assert evaluate(Zero(), 3.7) == 0
    assert evaluate(HalfLineLower(-1.0), -2.0) == math.inf
    assert evaluate(Quadratic(1.0), 2.0) == 4.0
    assert evaluate(AbsPower(2.0, 3.0), -2.0) == 16.0


def test_one_sided_derivative_examples():
    assert one_sided_derivatives(Quadratic(1.0), 1.0) == (2.0, 2.0)
    assert one_sided_derivatives(HalfLineLower(-1.0), -1.0) == (-math.inf, 0.0)
    f = PiecewiseLinearConvex((0.0,), (-1.0, 2.0))
    assert one_sided_derivatives(f, 0.0) == (-1.0, 2.0)
    assert one_sided_derivatives(Interval(-1.0, 1.0), 1.0) == (0.0, math.inf)


def test_derivatives_outside_domain_raise():
    with pytest.raises(DomainError):
        one_sided_derivatives(HalfLineLower(-1.0), -2.0)
    with pytest.raises(DomainError):
        one_sided_derivatives(HalfLineUpper(1.0), 1.5)


def test_prox_examples():
    r = prox(HalfLineLower(0.0), 0.1, -0.5)
    assert r.yosida_value == pytest.approx(-5.0, abs=1e-15)
    r = prox(HalfLineUpper(1.0), 0.5, 2.0)
    assert r.yosida_value == 2.0
    r = prox(Quadratic(1.0), 0.5, 2.0)
    assert (r.resolvent_point, r.yosida_value, r.envelope_value) == (1.0, 2.0, 2.0)


def test_soft_threshold():
    f = AbsPower(1.0, 1.0)
    y = np.array([-3.0, -0.5, 0.0, 0.2, 2.5])
    np.testing.assert_array_equal(f.resolvent(1.0, y), [-2.0, 0.0, 0.0, 0.0, 1.5])


def test_backward_prox_step_examples():
    for f in VARIANTS:
        assert backward_prox_step(f, 0.1, 0.0, 3.0) == 3.0
    assert backward_prox_step(Quadratic(0.5), 1.0, 2.0, 4.0) == pytest.approx(2.0, abs=1e-15)
    assert backward_prox_step(HalfLineLower(0.0), 0.1, 0.1, -0.4) == pytest.approx(-0.2, abs=1e-15)
    assert backward_prox_step_bisection(HalfLineLower(0.0), 0.1, 0.1, -0.4) == pytest.approx(-0.2, abs=1e-12)


def test_constructor_rejects_unnormalised():
    with pytest.raises(ConfigError):
        HalfLineLower(0.5)
    with pytest.raises(ConfigError):
        HalfLineUpper(-0.1)
    with pytest.raises(ConfigError):
        Interval(0.5, 1.0)
    with pytest.raises(ConfigError):
        Quadratic(-1.0)
    with pytest.raises(ConfigError):
        AbsPower(1.0, 0.5)
    with pytest.raises(ConfigError):
        PiecewiseLinearConvex((0.0,), (1.0, 2.0))  # 0 not a subgradient at 0
    with pytest.raises(ConfigError):
        PiecewiseLinearConvex((0.0, 1.0), (-1.0, 2.0, 1.0))  # slopes decrease


def test_convex_from_dict_roundtrip(variant):
    assert convex_from_dict(variant.to_dict()) == variant


def test_convex_from_dict_rejects_unknown():
    with pytest.raises(ConfigError):
        convex_from_dict({"kind": "cubic"})
    with pytest.raises(ConfigError):
        convex_from_dict({"kind": "quadratic", "c": 1.0, "extra": 2})
    with pytest.raises(ConfigError):
        convex_from_dict({"c": 1.0})


def test_remark_formulas_exact(rng):
    y = rng.uniform(-5, 5, 1000)
    eps = rng.uniform(1e-4, 2.0, 1000)
    a, b = -0.75, 1.25
    lower = HalfLineLower(a)
    upper = HalfLineUpper(b)
    np.testing.assert_array_equal(lower.yosida(eps, y), -np.maximum(-(y - a), 0.0) / eps)
    np.testing.assert_array_equal(upper.yosida(eps, y), np.maximum(y - b, 0.0) / eps)


def test_moreau_identity(variant, rng):
    # envelope gradient equals the Yosida gradient; the envelope is
    # differentiated by central differences of the closed form
    y = rng.uniform(-4, 4, 1000)
    eps = 0.3
    h = 1e-6
    env = lambda v: prox(variant, eps, v).envelope_value  # noqa: E731
    fd = (env(y + h) - env(y - h)) / (2 * h)
    u = prox(variant, eps, y).yosida_value
    np.testing.assert_allclose(fd, u, atol=2e-5)


def test_prox_result_invariants(variant, rng):
    y = rng.uniform(-4, 4, 500)
    for eps in (1e-3, 0.1, 2.0):
        r = prox(variant, eps, y)
        assert np.array_equal(r.yosida_value, (y - r.resolvent_point) / eps)
        env = (y - r.resolvent_point) ** 2 / (2 * eps) + variant.value(r.resolvent_point)
        np.testing.assert_allclose(r.envelope_value, env, rtol=0, atol=1e-12)


def test_resolvent_matches_bisection(variant, rng):
    y = rng.uniform(-6, 6, 1000)
    for eps in (1e-3, 0.05, 1.7):
        np.testing.assert_allclose(variant.resolvent(eps, y), resolvent_bisection(variant, eps, y), atol=1e-10)


def test_yosida_monotone_lipschitz(variant, rng):
    y1 = rng.uniform(-5, 5, 10_000)
    y2 = rng.uniform(-5, 5, 10_000)
    eps = rng.uniform(1e-3, 2.0, 10_000)
    u1 = variant.yosida(eps, y1)
    u2 = variant.yosida(eps, y2)
    assert np.all((u1 - u2) * (y1 - y2) >= -1e-9)
    assert np.all(np.abs(u1 - u2) <= np.abs(y1 - y2) / eps + 1e-9)


def test_resolvent_nonexpansive(variant, rng):
    y1 = rng.uniform(-5, 5, 5000)
    y2 = rng.uniform(-5, 5, 5000)
    for eps in (1e-2, 1.0):
        j1, j2 = variant.resolvent(eps, y1), variant.resolvent(eps, y2)
        assert np.all(np.abs(j1 - j2) <= np.abs(y1 - y2) + 1e-12)


def test_envelope_sandwich_and_subgradient(variant, rng):
    y = rng.uniform(-4, 4, 2000)
    inside = np.isfinite(variant.value(y))
    for eps in (1e-2, 0.5):
        r = prox(variant, eps, y)
        j = np.asarray(r.resolvent_point)
        env = np.asarray(r.envelope_value)
        assert np.all(variant.value(j) <= env + 1e-12)
        assert np.all(env[inside] <= variant.value(y[inside]) + 1e-12)
        assert np.all((y - j) ** 2 / (2 * eps) <= env + 1e-12)
        left, right = variant.derivatives(j)
        u = np.asarray(r.yosida_value)
        assert np.all(u >= left - 1e-9 * np.maximum(1, np.abs(left)))
        assert np.all(u <= right + 1e-9 * np.maximum(1, np.abs(right)))


def test_yosida_zero_at_origin(variant):
    for eps in (1e-6, 1e-2, 3.0):
        assert variant.yosida(eps, np.zeros(1))[0] == 0.0


def test_backward_prox_step_vs_bisection(variant, rng):
    eps = rng.uniform(1e-3, 1.0, 1000)
    h = rng.uniform(0.0, 1.0, 1000)
    v = rng.uniform(-5, 5, 1000)
    fast = np.array([backward_prox_step(variant, e, hh, vv) for e, hh, vv in zip(eps, h, v)])
    slow = np.array([backward_prox_step_bisection(variant, e, hh, vv) for e, hh, vv in zip(eps, h, v)])
    np.testing.assert_allclose(fast, slow, atol=1e-10, rtol=0)


@settings(max_examples=200, deadline=None)
@given(y=finite, eps=positive, h=st.floats(0.0, 5.0))
def test_backward_prox_step_solves_equation(y, eps, h):
    for f in VARIANTS:
        out = backward_prox_step(f, eps, h, y)
        resid = out + h * float(f.yosida(eps, np.array([out]))[0]) - y
        assert abs(resid) <= 1e-9 * max(1.0, abs(y))


@settings(max_examples=200, deadline=None)
@given(y=finite, eps=positive)
def test_envelope_below_function(y, eps):
    for f in VARIANTS:
        r = prox(f, eps, y)
        assert r.envelope_value <= f.value(np.array([y]))[0] + 1e-12
        assert r.envelope_value >= -1e-12


def test_abs_power_general_exponent_against_bisection():
    f = AbsPower(1.3, 2.5)
    y = np.linspace(-20, 20, 401)
    np.testing.assert_allclose(f.resolvent(0.01, y), resolvent_bisection(f, 0.01, y), atol=1e-10)
