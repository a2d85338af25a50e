import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ols_cs.exceptions import DegenerateColumn, DimensionMismatch, RankDeficient
from ols_cs.linalg import (
    ProjectionCache,
    QrState,
    least_squares_on_support,
    orthogonal_complement_residual,
    project_out,
    qr_append,
)


class TestProjectOut:
    def test_orthogonal_columns(self):
        cache = ProjectionCache.from_matrix(np.eye(3)[:, :2])
        out = project_out(cache, 0)
        np.testing.assert_allclose(out.projected_columns[:, 0], 0.0)
        np.testing.assert_allclose(out.projected_columns[:, 1], [0, 1, 0])
        assert out.projected_norms[1] == pytest.approx(1.0)

    def test_parallel_columns(self):
        a = np.array([[1.0, 1.0], [2.0, 2.0]])
        out = project_out(ProjectionCache.from_matrix(a), 0)
        np.testing.assert_allclose(out.projected_columns, 0.0, atol=1e-15)

    def test_matches_pinv_projector(self, rng):
        a = rng.standard_normal((8, 5))
        out = project_out(ProjectionCache.from_matrix(a), 2)
        for i in range(5):
            expected = orthogonal_complement_residual(a[:, [2]], a[:, i])
            np.testing.assert_allclose(out.projected_columns[:, i], expected, atol=1e-10)

    def test_sequential_projections(self, rng):
        a = rng.standard_normal((10, 7))
        cache = ProjectionCache.from_matrix(a)
        chosen = [4, 1, 6]
        for j in chosen:
            project_out(cache, j, inplace=True)
        for i in range(7):
            expected = orthogonal_complement_residual(a[:, chosen], a[:, i])
            np.testing.assert_allclose(cache.projected_columns[:, i], expected, atol=1e-10)
        np.testing.assert_allclose(cache.projected_norms, np.linalg.norm(cache.projected_columns, axis=0))
        assert all(cache.is_degenerate(j) for j in chosen)

    def test_copy_semantics(self, rng):
        a = rng.standard_normal((4, 3))
        cache = ProjectionCache.from_matrix(a)
        project_out(cache, 0)
        np.testing.assert_array_equal(cache.projected_columns, a)

    def test_degenerate_raises(self):
        cache = ProjectionCache.from_matrix(np.array([[1.0, 1.0], [0.0, 0.0]]))
        project_out(cache, 0, inplace=True)
        with pytest.raises(DegenerateColumn):
            project_out(cache, 1)


class TestQr:
    def test_first_column(self):
        st_ = qr_append(QrState.empty(3), np.array([1.0, 0, 0]))
        np.testing.assert_allclose(st_.q_columns, [[1], [0], [0]])
        np.testing.assert_allclose(st_.r_factor, [[1]])

    def test_hand_gram_schmidt(self):
        s = qr_append(QrState.empty(3), np.array([1.0, 0, 0]))
        s = qr_append(s, np.array([1.0, 1, 0]))
        np.testing.assert_allclose(s.q_columns[:, 1], [0, 1, 0], atol=1e-15)
        np.testing.assert_allclose(s.r_factor, [[1, 1], [0, 1]])
        assert s.selected_count == 2

    def test_reconstruction(self, rng):
        cols = rng.standard_normal((10, 6))
        s = QrState.empty(10)
        for j in range(6):
            s = qr_append(s, cols[:, j])
        assert np.linalg.norm(cols - s.q_columns @ s.r_factor) < 1e-10
        assert np.abs(s.q_columns.T @ s.q_columns - np.eye(6)).max() < 1e-12
        assert np.all(np.diag(s.r_factor) > 0)
        np.testing.assert_array_equal(s.r_factor, np.triu(s.r_factor))

    def test_rank_deficient(self):
        s = qr_append(QrState.empty(3), np.array([1.0, 2, 3]))
        with pytest.raises(RankDeficient):
            qr_append(s, np.array([2.0, 4, 6]))

    def test_rank_test_is_relative(self):
        # tiny but independent column must be accepted
        s = qr_append(QrState.empty(2), np.array([1e-12, 0.0]))
        s = qr_append(s, np.array([0.0, 1e-12]))
        assert s.selected_count == 2

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            qr_append(QrState.empty(3), np.ones(4))


class TestLeastSquares:
    def test_matches_lstsq(self, rng):
        a = rng.standard_normal((12, 4))
        y = rng.standard_normal(12)
        s = QrState.empty(12)
        for j in range(4):
            s = qr_append(s, a[:, j])
        np.testing.assert_allclose(least_squares_on_support(s, y), np.linalg.lstsq(a, y, rcond=None)[0],
                                   atol=1e-12)

    def test_empty_state(self):
        with pytest.raises(RankDeficient):
            least_squares_on_support(QrState.empty(3), np.ones(3))

    def test_bad_y(self):
        s = qr_append(QrState.empty(3), np.ones(3))
        with pytest.raises(DimensionMismatch):
            least_squares_on_support(s, np.ones(2))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 12), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_residual_orthogonal_to_support(m, k, seed):
    k = min(k, m)
    r = np.random.default_rng(seed)
    a = r.standard_normal((m, k))
    y = r.standard_normal(m)
    s = QrState.empty(m)
    for j in range(k):
        s = qr_append(s, a[:, j])
    res = y - a @ least_squares_on_support(s, y)
    assert np.abs(a.T @ res).max() < 1e-8 * max(1.0, np.linalg.norm(y))
