import os

import numpy as np
import pytest

os.environ.setdefault("PVISOLVE_CHECKS", "1")

from pvisolve import Coefficients, IntervalDomain, ProblemSpec  # noqa: E402
from pvisolve.convex import (  # noqa: E402
    AbsPower,
    HalfLineLower,
    HalfLineUpper,
    Interval,
    PiecewiseLinearConvex,
    Quadratic,
    Zero,
)

HEAT_H = "cos(3.141592653589793*x1)"

VARIANTS = [
    Zero(),
    HalfLineLower(-0.5),
    HalfLineLower(0.0),
    HalfLineUpper(1.0),
    Interval(-1.0, 2.0),
    Quadratic(0.7),
    AbsPower(1.5, 1.0),
    AbsPower(0.5, 2.0),
    AbsPower(2.0, 3.0),
    PiecewiseLinearConvex((-1.0, 0.0, 1.5), (-2.0, -0.5, 0.25, 3.0)),
]


@pytest.fixture(params=VARIANTS, ids=lambda f: f.kind + repr(f.to_dict()))
def variant(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def heat():
    return ProblemSpec(IntervalDomain(0.0, 1.0), Coefficients.from_values(1, b=0, sigma=1, h=HEAT_H), T=1.0)
