"""Monte Carlo solver for parabolic variational inequalities with multivalued Neumann conditions.

The solution ``u(t, x)`` of the forward problem is represented through a
backward stochastic variational inequality driven by a reflected diffusion.
"""

__version__ = "0.1.0"

from .bsvi import BackwardSolution, SolverConfig, solve_backward
from .convex import (
    AbsPower,
    ConvexFunction,
    HalfLineLower,
    HalfLineUpper,
    Interval,
    PiecewiseLinearConvex,
    Quadratic,
    Zero,
    backward_prox_step,
    prox,
)
from .estimator import PVIEstimator
from .feynman_kac import SolutionGrid, evaluate_point, solve_grid
from .problem import AssumptionConstants, BallDomain, Coefficients, IntervalDomain, ProblemSpec
from .sde import PathBundle, TimeGrid, simulate

__all__ = [
    "AbsPower",
    "AssumptionConstants",
    "BackwardSolution",
    "BallDomain",
    "Coefficients",
    "ConvexFunction",
    "HalfLineLower",
    "HalfLineUpper",
    "Interval",
    "IntervalDomain",
    "PVIEstimator",
    "PathBundle",
    "PiecewiseLinearConvex",
    "ProblemSpec",
    "Quadratic",
    "SolutionGrid",
    "SolverConfig",
    "TimeGrid",
    "Zero",
    "backward_prox_step",
    "evaluate_point",
    "prox",
    "simulate",
    "solve_backward",
    "solve_grid",
]
