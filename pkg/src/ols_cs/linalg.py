"""Projections and incremental QR used by the greedy solvers.

The OLS identification step needs, for every atom, the component of the
atom orthogonal to the span of the atoms chosen so far.  Those components
are kept in a :class:`ProjectionCache` and refreshed with one rank-one
update per iteration, so each iteration costs O(MN).  The least-squares
estimate on the current support comes from a :class:`QrState` grown one
column at a time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.linalg.blas import dger

from .exceptions import DegenerateColumn, DimensionMismatch, RankDeficient

#: Relative threshold below which a (projected) column counts as zero.
TAU_RANK = 1e-10
#: Absolute tolerance for floating point assertions.
TAU_NUM = 1e-8
#: Orthonormality tolerance for Q factors and basis sets.
TAU_ORTH = 1e-10


@dataclass
class ProjectionCache:
    """Current values of the projected atoms and their norms.

    ``projected_columns[:, i]`` holds ``P_perp phi_i`` where ``P_perp`` is
    the projector onto the orthogonal complement of the selected atoms.
    ``column_norms`` are the norms of the original atoms and set the scale
    for the rank test.
    """

    projected_columns: np.ndarray
    projected_norms: np.ndarray
    column_norms: np.ndarray

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "ProjectionCache":
        cols = np.array(matrix, dtype=float, order="F", copy=True)
        norms = np.sqrt(np.einsum("ij,ij->j", cols, cols))
        return cls(cols, norms, norms.copy())

    @property
    def n_columns(self) -> int:
        return self.projected_columns.shape[1]

    def is_degenerate(self, index: int) -> bool:
        return bool(self.projected_norms[index] <= TAU_RANK * self.column_norms[index])

    def copy(self) -> "ProjectionCache":
        return ProjectionCache(
            self.projected_columns.copy(), self.projected_norms.copy(), self.column_norms.copy()
        )


def project_out(cache: ProjectionCache, chosen: int, *, inplace: bool = False) -> ProjectionCache:
    """Remove the direction of projected column ``chosen`` from every column.

    Applies ``c_i <- c_i - <c_i, c_j> / ||c_j||^2 * c_j`` with ``c_j`` the
    chosen projected column, then refreshes the norms.  One pass over the
    N columns.
    """
    if cache.is_degenerate(chosen):
        raise DegenerateColumn(
            f"projected norm of column {chosen} is {cache.projected_norms[chosen]:.3e}"
        )
    out = cache if inplace else cache.copy()
    cols = out.projected_columns
    q = cols[:, chosen] / out.projected_norms[chosen]
    coeffs = q @ cols
    # in-place rank-one update; falls back to numpy when BLAS returns a copy
    updated = dger(-1.0, q, coeffs, a=cols, overwrite_a=1)
    if updated is not cols:
        cols -= np.outer(q, coeffs)
    # the chosen column is exactly in the removed direction
    cols[:, chosen] = 0.0
    out.projected_norms = np.sqrt(np.einsum("ij,ij->j", cols, cols))
    return out


@dataclass
class QrState:
    """Thin QR factorisation ``Phi_S = Q R`` of the selected columns."""

    q_columns: np.ndarray  # (M, k)
    r_factor: np.ndarray  # (k, k), upper triangular

    @classmethod
    def empty(cls, m: int) -> "QrState":
        return cls(np.zeros((m, 0)), np.zeros((0, 0)))

    @property
    def selected_count(self) -> int:
        return self.q_columns.shape[1]

    @property
    def n_rows(self) -> int:
        return self.q_columns.shape[0]


def qr_append(state: QrState, column: np.ndarray) -> QrState:
    """Append one column using modified Gram-Schmidt with one
    reorthogonalisation pass."""
    column = np.asarray(column, dtype=float)
    m, k = state.q_columns.shape
    if column.shape != (m,):
        raise DimensionMismatch(f"column has shape {column.shape}, expected ({m},)")
    v = column.copy()
    coeffs = np.zeros(k)
    for _ in range(2):
        for i in range(k):
            q = state.q_columns[:, i]
            c = q @ v
            v -= c * q
            coeffs[i] += c
    rho = float(np.linalg.norm(v))
    if rho <= TAU_RANK * float(np.linalg.norm(column)):
        raise RankDeficient(f"column residual norm {rho:.3e} after orthogonalisation")
    q_new = np.empty((m, k + 1))
    q_new[:, :k] = state.q_columns
    q_new[:, k] = v / rho
    r_new = np.zeros((k + 1, k + 1))
    r_new[:k, :k] = state.r_factor
    r_new[:k, k] = coeffs
    r_new[k, k] = rho
    return QrState(q_new, r_new)


def least_squares_on_support(state: QrState, y: np.ndarray) -> np.ndarray:
    """Coefficients minimising ``||y - Phi_S x||`` via ``R x = Q^T y``."""
    if state.selected_count == 0:
        raise RankDeficient("least squares on an empty support")
    y = np.asarray(y, dtype=float)
    if y.shape != (state.n_rows,):
        raise DimensionMismatch(f"y has shape {y.shape}, expected ({state.n_rows},)")
    diag = np.diag(state.r_factor)
    if np.any(diag <= TAU_RANK):
        raise RankDeficient(f"R has a diagonal entry {diag.min():.3e}")
    return solve_triangular(state.r_factor, state.q_columns.T @ y, lower=False)


def orthogonal_complement_residual(matrix: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``(I - A A^+) y`` from an explicit pseudo-inverse.

    Reference implementation for checks; O(M k^2) per call.
    """
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.shape[1] == 0:
        return np.array(y, dtype=float)
    return y - matrix @ (np.linalg.pinv(matrix) @ y)
