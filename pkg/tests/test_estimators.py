import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.linear_model import OrthogonalMatchingPursuit as SkOMP

from ols_cs import ExtendedOLS, OrthogonalLeastSquares, OrthogonalMatchingPursuit
from ols_cs.dictionaries import gaussian_dictionary, measure, random_sparse_signal


@pytest.fixture
def problem():
    d = gaussian_dictionary(40, 80, 21)
    s = random_sparse_signal(80, 5, 21)
    return d.matrix, measure(d, s), s


@pytest.mark.parametrize("cls", [OrthogonalLeastSquares, OrthogonalMatchingPursuit, ExtendedOLS])
def test_fit_recovers(cls, problem):
    X, y, s = problem
    est = cls(n_nonzero_coefs=5).fit(X, y)
    np.testing.assert_allclose(est.coef_, s.to_dense(), atol=1e-8)
    np.testing.assert_allclose(est.predict(X), y, atol=1e-8)
    assert sorted(est.support_.tolist()) == sorted(s.support.tolist())
    assert est.n_features_in_ == 80


def test_omp_matches_sklearn(problem):
    X, _, _ = problem
    y = np.random.default_rng(0).standard_normal(40)
    ours = OrthogonalMatchingPursuit(n_nonzero_coefs=6, tol=0.0).fit(X, y)
    ref = SkOMP(n_nonzero_coefs=6, fit_intercept=False).fit(X, y)
    np.testing.assert_allclose(ours.coef_, ref.coef_, atol=1e-10)


def test_normalize_rescales(problem):
    X, y, s = problem
    scale = np.linspace(0.5, 3.0, X.shape[1])
    est = OrthogonalLeastSquares(n_nonzero_coefs=5).fit(X * scale, y)
    np.testing.assert_allclose(est.coef_ * scale, s.to_dense(), atol=1e-8)


def test_params_and_clone():
    est = OrthogonalLeastSquares(n_nonzero_coefs=3, use_dummy=True, warm_start_alpha=2.0)
    params = est.get_params()
    assert params["n_nonzero_coefs"] == 3 and params["warm_start_alpha"] == 2.0
    c = clone(est).set_params(n_nonzero_coefs=4)
    assert c.n_nonzero_coefs == 4 and est.n_nonzero_coefs == 3


def test_warm_estimator(problem):
    X, y, s = problem
    est = OrthogonalLeastSquares(n_nonzero_coefs=5, use_dummy=True).fit(X, y)
    assert est.result_.dummy_coefficient is not None
    np.testing.assert_allclose(est.coef_, s.to_dense(), atol=1e-8)


def test_not_fitted():
    with pytest.raises(NotFittedError):
        OrthogonalLeastSquares().predict(np.eye(3))


def test_rejects_nan():
    X = np.ones((3, 4))
    X[0, 0] = np.nan
    with pytest.raises(ValueError):
        OrthogonalLeastSquares(n_nonzero_coefs=1).fit(X, np.ones(3))


def test_score(problem):
    X, y, _ = problem
    assert ExtendedOLS(n_nonzero_coefs=5).fit(X, y).score(X, y) == pytest.approx(1.0)
