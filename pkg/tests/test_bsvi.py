import math
import warnings

import numpy as np
import pytest

from pvisolve import Coefficients, IntervalDomain, ProblemSpec
from pvisolve.bsvi import (
    SolverConfig,
    apriori_bounds_report,
    contraction_experiment,
    fit_loglog_slope,
    penalization_sweep,
    solve_backward,
)
from pvisolve.convex import HalfLineLower
from pvisolve.exceptions import ConfigError
from pvisolve.sde import TimeGrid, simulate


def _prob(sigma=1.0, f=0.0, g=0.0, h=0.0, phi=None, dom=(0.0, 1.0), T=1.0, b=0.0):
    kw = {} if phi is None else {"phi": phi}
    return ProblemSpec(IntervalDomain(*dom), Coefficients.from_values(1, b=b, sigma=sigma, f=f, g=g, h=h), T=T,
                       **kw)


def _paths(p, x0, n_paths, n_steps, seed=0):
    return simulate(p, 0.0, [x0], TimeGrid(0.0, p.T, n_steps), n_paths, seed)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(eps=0.0)
    with pytest.raises(ValueError):
        SolverConfig(basis_degree=-1)
    with pytest.raises(ValueError):
        SolverConfig(picard_iters=0)
    assert SolverConfig().eps == 1e-3 and SolverConfig().basis_degree == 3


def test_constant_terminal():
    p = _prob(h=2.5)
    sol = solve_backward(p, _paths(p, 0.3, 500, 20))
    np.testing.assert_allclose(sol.Y, 2.5, rtol=0, atol=1e-10)
    assert np.max(np.abs(sol.Z)) < 1e-10
    assert np.all(sol.U == 0) and np.all(sol.V == 0)


def test_linear_generator():
    p = _prob(sigma=0.0, f="-y", h=1.0, dom=(-1.0, 1.0))
    sol = solve_backward(p, _paths(p, 0.0, 16, 1000))
    assert abs(sol.y0 - math.exp(-1)) <= 1e-3


def test_deterministic_obstacle():
    p = _prob(sigma=0.0, f=-1.0, phi=HalfLineLower(0.0), dom=(-1.0, 1.0))
    eps = 1e-6
    sol = solve_backward(p, _paths(p, 0.0, 8, 1000), SolverConfig(eps=eps))
    assert np.max(np.abs(sol.Y)) <= 1e-6 + 2 * math.sqrt(eps)
    assert np.max(np.abs(sol.U + 1)) <= 1e-3
    assert np.all(sol.U <= 0)


def test_terminal_exact_and_residuals(heat):
    paths = _paths(heat, 0.25, 2000, 50)
    cfg = SolverConfig()
    sol = solve_backward(heat, paths, cfg)
    assert np.array_equal(sol.Y[-1], heat.coeffs.h_value(paths.X[-1]))
    assert np.max(sol.implicit_residuals) <= cfg.implicit_tol
    d = sol.diagnostics()
    assert d["max_implicit_residual"] <= cfg.implicit_tol
    assert np.isfinite(d["max_condition_number"])


def test_nonlinear_implicit_residual():
    p = _prob(f="-y^3 - y", g="-2*y", h="x1", phi=HalfLineLower(-0.5), dom=(-0.5, 1.0))
    cfg = SolverConfig(eps=1e-2)
    sol = solve_backward(p, _paths(p, 0.2, 1000, 40), cfg)
    assert np.max(sol.implicit_residuals) <= cfg.implicit_tol


def test_yosida_flux_signs():
    p = _prob(f=-1.0, phi=HalfLineLower(0.0), h="x1", dom=(0.0, 1.0))
    cfg = SolverConfig(eps=1e-2)
    sol = solve_backward(p, _paths(p, 0.5, 2000, 50), cfg)
    assert np.all(sol.U <= 0)
    J = p.phi.resolvent(cfg.eps, sol.Y[:-1])
    assert np.all(sol.U[J > 0] == 0)
    assert np.all(J[sol.U < 0] == 0)


def test_determinism(heat):
    paths = _paths(heat, 0.25, 1000, 30)
    a = solve_backward(heat, paths)
    b = solve_backward(heat, paths)
    for name in ("Y", "Z", "U", "V"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_stability_cap_warns(heat):
    p = _prob(h="x1", phi=HalfLineLower(0.0))
    paths = _paths(p, 0.25, 100, 5)
    with pytest.warns(RuntimeWarning):
        solve_backward(p, paths, SolverConfig(eps=1e-3))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        solve_backward(p, paths, SolverConfig(eps=1e-3, stability_cap=1e6))
        solve_backward(heat, paths, SolverConfig(eps=1e-3))


def test_monotone_comparison_degree_zero():
    p = _prob(f="-y^3", h="x1")
    paths = _paths(p, 0.5, 2000, 40)
    cfg = SolverConfig(basis_degree=0, eps=1e-2)
    lo = solve_backward(p, paths, cfg, terminal="x1 - 0.2")
    hi = solve_backward(p, paths, cfg, terminal="x1 + 0.1*x1^2")
    assert np.all(lo.Y <= hi.Y + 1e-10)


def test_contraction_identical():
    p = _prob(h="x1")
    rep = contraction_experiment(p, _paths(p, 0.5, 1000, 20), SolverConfig(), "x1", "x1")
    assert rep["numerator"] == 0.0


def test_contraction_linear():
    p = _prob(h="x1")
    paths = _paths(p, 0.5, 5000, 40)
    rep = contraction_experiment(p, paths, SolverConfig(), "cos(3*x1)", "x1^2", lam=0.0, mu=0.0)
    assert rep["sup_mean_sq"] <= rep["terminal_mean_sq"] * (1 + 1e-10)
    ms = rep["mean_sq_by_step"]
    assert np.all(np.diff(ms) >= -1e-12 * ms[-1])


def test_contraction_lipschitz_stable():
    p = _prob(f="-2*y + 0.5*sin(y)", h="x1")
    ratios = []
    for seed in (1, 2, 3):
        paths = _paths(p, 0.5, 4000, 40, seed)
        ratios.append(contraction_experiment(p, paths, SolverConfig(), "x1", "x1^2 + 0.5")["ratio"])
    ratios = np.array(ratios)
    assert np.all(np.isfinite(ratios))
    assert (ratios.max() - ratios.min()) / ratios.mean() <= 0.2


def test_sweep_preconditions(heat):
    paths = _paths(heat, 0.25, 100, 10)
    with pytest.raises(ValueError):
        penalization_sweep(heat, paths, [1e-1])
    with pytest.raises(ValueError):
        penalization_sweep(heat, paths, [1e-3, 1e-2, 1e-1])


def test_sweep_zero_pair(heat):
    paths = _paths(heat, 0.25, 500, 20)
    out = penalization_sweep(heat, paths, [1e-1, 1e-2, 1e-3], SolverConfig(stability_cap=1e9))
    assert all(r["distance_sq"] <= 1e-20 for r in out["rows"])
    assert math.isnan(out["slope"])
    assert len(out["rows"]) == 3


def test_fit_slope():
    xs = np.array([1e-1, 1e-2, 1e-3])
    assert fit_loglog_slope(xs, 3 * xs**0.5) == pytest.approx(0.5, abs=1e-12)


def test_bounds_report_zero():
    p = _prob(h=0.0)
    sol = solve_backward(p, _paths(p, 0.5, 200, 10))
    rep = apriori_bounds_report(sol, p)
    assert all(v == 0 for v in rep["lhs"].values())


def test_bounds_report_stable_across_seeds(heat):
    out = []
    for seed in (1, 2, 3):
        sol = solve_backward(heat, _paths(heat, 0.25, 4000, 40, seed), SolverConfig(stability_cap=1e9))
        out.append(apriori_bounds_report(sol, heat)["ratios"])
    for key in out[0]:
        vals = np.array([r[key] for r in out])
        assert np.all(np.isfinite(vals))
        if vals.mean() > 0:
            assert (vals.max() - vals.min()) / vals.mean() <= 0.2, key


def test_bounds_ratios_bounded_in_eps():
    p = _prob(f=-1.0, phi=HalfLineLower(0.0), h="x1", dom=(0.0, 1.0))
    paths = _paths(p, 0.5, 2000, 100)
    tot = []
    for eps in (1e-1, 1e-2, 1e-3):
        sol = solve_backward(p, paths, SolverConfig(eps=eps, stability_cap=1e9))
        tot.append(apriori_bounds_report(sol, p)["ratios"]["ineg1_total"])
    assert np.all(np.isfinite(tot))
    assert max(tot) <= 2.0 * tot[0] + 1e-12


def test_terminal_forms(heat):
    paths = _paths(heat, 0.25, 200, 10)
    cfg = SolverConfig(stability_cap=1e9)
    a = solve_backward(heat, paths, cfg, terminal=lambda x: np.cos(np.pi * x[:, 0]))
    b = solve_backward(heat, paths, cfg, terminal="cos(3.141592653589793*x1)")
    np.testing.assert_allclose(a.Y, b.Y, atol=1e-12)
    c = solve_backward(heat, paths, cfg, terminal=1.5)
    np.testing.assert_allclose(c.Y, 1.5, rtol=0, atol=1e-10)
    with pytest.raises((ConfigError, TypeError, ValueError)):
        solve_backward(heat, paths, cfg, terminal=object())
