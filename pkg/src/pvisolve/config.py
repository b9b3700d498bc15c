"""Strict JSON problem configuration.

Example::

    {
      "version": 1,
      "domain": {"kind": "interval", "left": 0.0, "right": 1.0},
      "coefficients": {"b": 0.0, "sigma": 1.0, "f": 0.0, "g": 0.0, "h": "cos(3.141592653589793*x1)"},
      "phi": {"kind": "zero"},
      "psi": {"kind": "zero"},
      "T": 1.0,
      "constants": {"alpha": 0.0, "beta": 0.0, "gamma": 0.0, "L": 0.0}
    }

Optional sections ``validation``, ``solver``, ``mc``, ``grid`` and
``oracle`` hold run defaults.  Unknown keys anywhere are errors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .bsvi import SolverConfig
from .convex import convex_from_dict
from .exceptions import ConfigError
from .problem import AssumptionConstants, BallDomain, Coefficients, IntervalDomain, ProblemSpec

__all__ = ["RunConfig", "load_config", "parse_config", "problem_from_dict", "SCHEMA_VERSION"]

SCHEMA_VERSION = 1

_TOP = {"version", "domain", "coefficients", "phi", "psi", "T", "constants",
        "validation", "solver", "mc", "grid", "oracle"}
_REQUIRED = {"version", "domain", "coefficients"}
_COEFF = {"b", "sigma", "f", "g", "h"}
_CONST = {"alpha", "beta", "gamma", "L", "lambda", "mu"}
_VALIDATION = {"n_samples", "y_range", "z_range", "eps_list", "uniqueness"}
_SOLVER = {"eps", "basis_degree", "level_feature", "implicit_tol", "implicit_max_iter", "picard_iters",
           "stability_cap"}
_MC = {"paths", "steps"}
_GRID = {"times", "points", "tensor"}
_ORACLE = {"tolerance", "nx", "nt", "theta", "n_terms"}


def _check_keys(obj, allowed, where, required=()):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object, got {type(obj).__name__}")
    extra = set(obj) - set(allowed)
    if extra:
        raise ConfigError(f"{where}: unknown keys {sorted(extra)}")
    missing = set(required) - set(obj)
    if missing:
        raise ConfigError(f"{where}: missing keys {sorted(missing)}")


def _number(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {v!r}")
    return float(v)


def _domain(spec):
    _check_keys(spec, {"kind", "left", "right", "center", "radius"}, "domain", {"kind"})
    kind = spec["kind"]
    if kind == "interval":
        _check_keys(spec, {"kind", "left", "right"}, "domain", {"left", "right"})
        try:
            return IntervalDomain(_number(spec["left"], "domain.left"), _number(spec["right"], "domain.right"))
        except ValueError as exc:
            raise ConfigError(f"domain: {exc}") from None
    if kind == "ball":
        _check_keys(spec, {"kind", "center", "radius"}, "domain", {"center", "radius"})
        center = spec["center"]
        if not isinstance(center, list) or not center:
            raise ConfigError("domain.center: expected a nonempty list of numbers")
        try:
            return BallDomain(tuple(_number(c, "domain.center") for c in center),
                              _number(spec["radius"], "domain.radius"))
        except ValueError as exc:
            raise ConfigError(f"domain: {exc}") from None
    raise ConfigError(f"domain.kind: unknown kind {kind!r}; known: ['ball', 'interval']")


def problem_from_dict(doc) -> ProblemSpec:
    """Build a :class:`ProblemSpec` from a parsed config document."""
    _check_keys(doc, _TOP, "config", _REQUIRED)
    if doc["version"] != SCHEMA_VERSION:
        raise ConfigError(f"version: unsupported schema version {doc['version']!r}; expected {SCHEMA_VERSION}")
    domain = _domain(doc["domain"])
    co = doc["coefficients"]
    _check_keys(co, _COEFF, "coefficients")
    coeffs = Coefficients.from_values(domain.dim, **co)
    const = doc.get("constants", {})
    _check_keys(const, _CONST, "constants")
    kw = {k: _number(v, f"constants.{k}") for k, v in const.items()}
    if "lambda" in kw:
        kw["lam"] = kw.pop("lambda")
    constants = AssumptionConstants(**kw)
    phi = convex_from_dict(doc.get("phi", {"kind": "zero"}))
    psi = convex_from_dict(doc.get("psi", {"kind": "zero"}))
    T = _number(doc.get("T", 1.0), "T")
    return ProblemSpec(domain, coeffs, phi, psi, T, constants)


@dataclass
class RunConfig:
    """A problem plus the optional run sections of its config file."""

    problem: ProblemSpec
    validation: dict = field(default_factory=dict)
    solver: SolverConfig = field(default_factory=SolverConfig)
    mc: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    oracle: dict = field(default_factory=dict)
    source: dict = field(default_factory=dict)


def parse_config(text: str) -> RunConfig:
    """Parse config text; malformed JSON raises :class:`ConfigError` with a byte offset."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise ConfigError(f"malformed JSON at byte {offset} (line {exc.lineno}, column {exc.colno}): {exc.msg}") \
            from None
    problem = problem_from_dict(doc)
    val = doc.get("validation", {})
    _check_keys(val, _VALIDATION, "validation")
    sol = doc.get("solver", {})
    _check_keys(sol, _SOLVER, "solver")
    try:
        solver = SolverConfig(**sol)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"solver: {exc}") from None
    mc = doc.get("mc", {})
    _check_keys(mc, _MC, "mc")
    grid = doc.get("grid", {})
    _check_keys(grid, _GRID, "grid")
    oracle = doc.get("oracle", {})
    _check_keys(oracle, _ORACLE, "oracle")
    return RunConfig(problem, val, solver, mc, grid, oracle, doc)


def load_config(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"config is not UTF-8 (byte {exc.start})") from None
    return parse_config(text)
