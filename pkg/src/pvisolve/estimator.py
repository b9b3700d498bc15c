"""Estimator-style facade over the pointwise solver."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .bsvi import SolverConfig
from .exceptions import ConfigError
from .feynman_kac import evaluate_point
from .problem import ProblemSpec
from .validation import validate_assumptions

__all__ = ["PVIEstimator"]


class PVIEstimator(BaseEstimator):
    """Monte Carlo solver for ``u(t, x)`` with a ``fit``/``predict`` interface.

    Parameters
    ----------
    problem : ProblemSpec
        The variational inequality to solve.
    n_paths, n_steps : int
        Monte Carlo size per evaluated node.
    eps : float
        Penalisation parameter.
    basis_degree : int
        Regression basis degree.
    seed : int
        Master seed; row ``i`` of a prediction uses stream ``i``.
    n_validation_samples : int
        Sample size of the assumption checks run by :meth:`fit`.

    Attributes
    ----------
    validation_report_ : ValidationReport
    n_features_in_ : int
        ``1 + d`` (time plus space coordinates).
    """

    def __init__(self, problem: ProblemSpec | None = None, n_paths=10_000, n_steps=100, eps=1e-3,
                 basis_degree=3, seed=0, n_validation_samples=512):
        self.problem = problem
        self.n_paths = n_paths
        self.n_steps = n_steps
        self.eps = eps
        self.basis_degree = basis_degree
        self.seed = seed
        self.n_validation_samples = n_validation_samples

    def _solver_config(self):
        return SolverConfig(eps=self.eps, basis_degree=self.basis_degree)

    def fit(self, X=None, y=None):
        """Check the problem's hypotheses; ``X`` and ``y`` are ignored."""
        if not isinstance(self.problem, ProblemSpec):
            raise ConfigError("PVIEstimator needs a ProblemSpec as `problem`")
        self._solver_config()
        self.validation_report_ = validate_assumptions(self.problem, self.n_validation_samples, self.seed)
        self.n_features_in_ = 1 + self.problem.dim
        return self

    def _rows(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X, dtype=np.float64, ensure_2d=True)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected rows (t, x1..x{self.n_features_in_ - 1}), got {X.shape[1]} columns")
        return X

    def predict_with_se(self, X):
        """Estimates and standard errors for rows ``(t, x1, ..., xd)``."""
        X = self._rows(X)
        cfg = self._solver_config()
        out = np.empty((X.shape[0], 2))
        for i, row in enumerate(X):
            out[i] = evaluate_point(self.problem, float(row[0]), row[1:], self.n_paths, self.n_steps, cfg,
                                    self.seed, stream=i)
        return out[:, 0], out[:, 1]

    def predict(self, X):
        return self.predict_with_se(X)[0]
