"""scikit-learn style wrappers around the greedy solvers."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .solvers import SolverConfig, WarmStart, ols_extended, ols_solve, omp_solve
from .utils.validation import check_dictionary, check_measurement


class _GreedyPursuit(RegressorMixin, BaseEstimator):
    """Shared fit/predict logic.

    ``fit(X, y)`` treats the columns of ``X`` as atoms, so ``X`` plays the
    role of the ``M x N`` dictionary and ``y`` the length-``M`` measurement.
    With ``normalize=True`` atoms are scaled to unit norm for the search and
    the coefficients are mapped back to the original scale.
    """

    def _solve(self, X, y, config):
        raise NotImplementedError

    def fit(self, X, y):
        X = check_dictionary(X)
        y = check_measurement(y, X.shape[0])
        if self.normalize:
            scale = np.linalg.norm(X, axis=0)
            scale[scale == 0] = 1.0
            A = X / scale
        else:
            scale = np.ones(X.shape[1])
            A = X
        K = self.n_nonzero_coefs
        if K is None:
            K = max(1, int(0.1 * X.shape[1]))
        result = self._solve(A, y, SolverConfig(sparsity=K, tolerance=self.tol, **self._extra_config()))
        self.coef_ = result.estimate / scale
        self.support_ = np.asarray(result.pruned_support, dtype=np.intp)
        self.selected_ = np.asarray(result.selected, dtype=np.intp)
        self.residual_norms_ = np.asarray(result.residual_norms)
        self.n_iter_ = result.n_iterations
        self.n_features_in_ = X.shape[1]
        self.result_ = result
        return self

    def _extra_config(self):
        return {}

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_dictionary(X)
        return X @ self.coef_


class OrthogonalLeastSquares(_GreedyPursuit):
    """Orthogonal Least Squares.

    Parameters
    ----------
    n_nonzero_coefs : int, default=None
        Sparsity ``K``; ``None`` means 10% of the features.
    tol : float, default=None
        Stop once the residual norm falls below this; ``None`` is
        ``1e-6 * ||y||``.
    normalize : bool, default=True
    warm_start_alpha : float or None, default=None
        Enables the dummy-column warm start when ``use_dummy`` is set.
    use_dummy : bool, default=False
    dummy_seed : int, default=0
    """

    def __init__(self, n_nonzero_coefs=None, tol=None, normalize=True, use_dummy=False,
                 warm_start_alpha=None, dummy_seed=0):
        self.n_nonzero_coefs = n_nonzero_coefs
        self.tol = tol
        self.normalize = normalize
        self.use_dummy = use_dummy
        self.warm_start_alpha = warm_start_alpha
        self.dummy_seed = dummy_seed

    def _extra_config(self):
        if self.use_dummy:
            return {"warm_start": WarmStart(self.warm_start_alpha, self.dummy_seed)}
        return {}

    def _solve(self, X, y, config):
        return ols_solve(X, y, config)


class OrthogonalMatchingPursuit(_GreedyPursuit):
    def __init__(self, n_nonzero_coefs=None, tol=None, normalize=True):
        self.n_nonzero_coefs = n_nonzero_coefs
        self.tol = tol
        self.normalize = normalize

    def _solve(self, X, y, config):
        return omp_solve(X, y, config)


class ExtendedOLS(_GreedyPursuit):
    """OLS run for ``n_iterations`` (default ``2K``) steps, pruned to ``K``."""

    def __init__(self, n_nonzero_coefs=None, n_iterations=None, tol=None, normalize=True):
        self.n_nonzero_coefs = n_nonzero_coefs
        self.n_iterations = n_iterations
        self.tol = tol
        self.normalize = normalize

    def _solve(self, X, y, config):
        m, n = X.shape
        K = config.sparsity
        L = self.n_iterations if self.n_iterations is not None else min(2 * K, m - 1, n)
        return ols_extended(X, y, K, max(L, K), config)
