"""Greedy pursuit solvers: OLS (fast and naive forms), OMP, the
dummy-column warm start and the extended L-iteration OLS.

All solvers share the Augment / Estimate / Update steps and differ only in
how the next atom is identified:

* OMP picks ``argmax |<phi_i, r>|``;
* OLS picks ``argmax |<phi_i, r>| / ||P_perp phi_i||``, which is the same
  atom that minimises the residual norm after adding it.

Ties go to the lowest index.  Selected atoms leave the candidate pool.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ._rng import make_rng
from .dictionaries import Dictionary, as_matrix
from .exceptions import DegenerateColumn, DimensionMismatch, InvalidDimensions, RankDeficient
from .linalg import (
    TAU_RANK,
    ProjectionCache,
    QrState,
    least_squares_on_support,
    orthogonal_complement_residual,
    project_out,
    qr_append,
)
from .utils.validation import check_dictionary, check_measurement

ALGORITHMS = ("ols", "omp", "ols2k", "ols-warm")
DEFAULT_RELATIVE_TOLERANCE = 1e-6


@dataclass(frozen=True)
class WarmStart:
    """Dummy-column warm start.  ``alpha=None`` means ``||y||``."""

    alpha: float | None = None
    dummy_seed: int = 0


@dataclass
class SolverConfig:
    sparsity: int
    max_iterations: int | None = None
    tolerance: float | None = None
    tie_break: str = "lowest_index"
    warm_start: WarmStart | None = None
    track_truth: Sequence[int] | None = None

    def __post_init__(self):
        if self.sparsity < 1:
            raise ValueError(f"sparsity must be >= 1, got {self.sparsity}")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.tolerance is not None and self.tolerance < 0:
            raise ValueError("tolerance must be nonnegative")
        if self.tie_break != "lowest_index":
            raise ValueError(f"unsupported tie_break {self.tie_break!r}")

    @property
    def iterations(self) -> int:
        return self.sparsity if self.max_iterations is None else self.max_iterations

    def stopping_tolerance(self, y: np.ndarray) -> float:
        if self.tolerance is None:
            return DEFAULT_RELATIVE_TOLERANCE * float(np.linalg.norm(y))
        return float(self.tolerance)


@dataclass
class SolveResult:
    """Output of one greedy solve.

    ``residual_norms[0]`` is the residual before the first identification
    step (``||y||``, or the residual after the dummy iteration for a warm
    start); entry ``k`` follows the ``k``-th selection.
    """

    selected: list[int]
    estimate: np.ndarray
    residual_norms: list[float]
    pruned_support: list[int]
    coefficients: np.ndarray
    iteration_correct: list[bool] | None = None
    exact_recovery: bool | None = None
    algorithm: str = "ols"
    dummy_coefficient: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def n_iterations(self) -> int:
        return len(self.selected)

    def trace_records(self) -> Iterable[dict]:
        for k, idx in enumerate(self.selected, start=1):
            rec = {
                "algorithm": self.algorithm,
                "iteration": k,
                "index": int(idx),
                "residual_norm": self.residual_norms[k],
            }
            if self.iteration_correct is not None:
                rec["correct"] = bool(self.iteration_correct[k - 1])
            yield rec

    def write_trace(self, fh) -> None:
        """One JSON object per iteration (JSON lines)."""
        for rec in self.trace_records():
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


# --- core iteration -------------------------------------------------------


def _identify_ols(cache: ProjectionCache, r: np.ndarray, available: np.ndarray) -> int:
    cand = available & (cache.projected_norms > TAU_RANK * cache.column_norms)
    if not cand.any():
        raise DegenerateColumn("every remaining column lies in the span of the selected ones")
    corr = cache.projected_columns.T @ r
    score = np.full(cache.n_columns, -np.inf)
    score[cand] = corr[cand] ** 2 / cache.projected_norms[cand] ** 2
    return int(np.argmax(score))


def _identify_omp(matrix: np.ndarray, r: np.ndarray, available: np.ndarray) -> int:
    if not available.any():
        raise DegenerateColumn("no candidate columns left")
    score = np.abs(matrix.T @ r)
    score[~available] = -np.inf
    return int(np.argmax(score))


def _pursuit(matrix, y, n_iter, rule, tol, preselected=()):
    """Run the greedy loop; returns (selected, coefficients, residual_norms).

    ``preselected`` atoms are placed in the support before the loop and do
    not count towards ``n_iter``.
    """
    m, n = matrix.shape
    state = QrState.empty(m)
    cache = ProjectionCache.from_matrix(matrix) if rule == "ols" else None
    available = np.ones(n, dtype=bool)
    selected: list[int] = []

    def augment(j):
        nonlocal state
        state = qr_append(state, matrix[:, j])
        if cache is not None:
            project_out(cache, j, inplace=True)
        available[j] = False
        selected.append(j)

    for j in preselected:
        augment(j)
    if selected:
        coef = least_squares_on_support(state, y)
        r = y - matrix[:, selected] @ coef
    else:
        coef = np.zeros(0)
        r = y.copy()
    residual_norms = [float(np.linalg.norm(r))]

    k = 0
    while residual_norms[-1] >= tol and k < n_iter:
        k += 1
        if rule == "ols":
            j = _identify_ols(cache, r, available)
        else:
            j = _identify_omp(matrix, r, available)
        augment(j)
        coef = least_squares_on_support(state, y)
        r = y - matrix[:, selected] @ coef
        residual_norms.append(float(np.linalg.norm(r)))
    return selected, coef, residual_norms


def _top_k(indices: Sequence[int], coef: np.ndarray, k: int) -> list[int]:
    """The ``k`` indices with largest |coefficient| (ties keep selection order)."""
    order = np.argsort(-np.abs(coef), kind="stable")[:k]
    return sorted(int(indices[i]) for i in order)


def _prepare(dictionary, y, config: SolverConfig, n_iter: int):
    matrix = check_dictionary(as_matrix(dictionary))
    m, n = matrix.shape
    y = check_measurement(y, m)
    if n_iter > min(m, n):
        raise InvalidDimensions(f"{n_iter} iterations exceed min(M, N) = {min(m, n)}")
    return matrix, y


def _finish(selected, coef, residual_norms, n, K, config, algorithm, resolve=None):
    pruned = _top_k(selected, coef, K)
    estimate = np.zeros(n)
    if resolve is not None and pruned and set(pruned) != set(selected):
        estimate[pruned] = resolve(pruned)
    else:
        pos = {j: i for i, j in enumerate(selected)}
        for j in pruned:
            estimate[j] = coef[pos[j]]
    result = SolveResult(
        selected=[int(j) for j in selected],
        estimate=estimate,
        residual_norms=residual_norms,
        pruned_support=pruned,
        coefficients=np.asarray(coef, dtype=float),
        algorithm=algorithm,
    )
    if config.track_truth is not None:
        truth = {int(t) for t in config.track_truth}
        result.iteration_correct = [j in truth for j in result.selected]
        result.exact_recovery = set(pruned) == truth
    return result


def _least_squares(matrix, y, support):
    state = QrState.empty(matrix.shape[0])
    for j in support:
        state = qr_append(state, matrix[:, j])
    return least_squares_on_support(state, y)


# --- public solvers -------------------------------------------------------


def ols_solve(dictionary, y, config: SolverConfig) -> SolveResult:
    """Orthogonal Least Squares with the O(KMN) projected-column update.

    Honours ``config.warm_start`` (see :func:`ols_warm_solve`).
    """
    if config.warm_start is not None:
        return ols_warm_solve(dictionary, y, config)
    matrix, y = _prepare(dictionary, y, config, config.iterations)
    tol = config.stopping_tolerance(y)
    selected, coef, norms = _pursuit(matrix, y, config.iterations, "ols", tol)
    return _finish(selected, coef, norms, matrix.shape[1], config.sparsity, config, "ols")


def omp_solve(dictionary, y, config: SolverConfig) -> SolveResult:
    """Orthogonal Matching Pursuit; same loop as OLS with the correlation rule."""
    if config.warm_start is not None:
        raise ValueError("the dummy-column warm start is defined for OLS only")
    matrix, y = _prepare(dictionary, y, config, config.iterations)
    tol = config.stopping_tolerance(y)
    selected, coef, norms = _pursuit(matrix, y, config.iterations, "omp", tol)
    return _finish(selected, coef, norms, matrix.shape[1], config.sparsity, config, "omp")


def ols_select_naive(dictionary, selected: Sequence[int], y) -> int:
    """OLS identification by brute force.

    For every candidate ``i`` builds ``Phi_{S + [i]}``, projects ``y`` with
    an explicit pseudo-inverse and returns the index with the smallest
    residual norm.  Candidates already spanned by ``selected`` are skipped.
    """
    matrix = check_dictionary(as_matrix(dictionary))
    m, n = matrix.shape
    y = check_measurement(y, m)
    selected = [int(s) for s in selected]
    if len(selected) >= m:
        raise InvalidDimensions(f"{len(selected)} selected columns leave no room in R^{m}")
    base = matrix[:, selected]
    chosen = set(selected)
    best, best_val = None, math.inf
    for i in range(n):
        if i in chosen:
            continue
        col = matrix[:, i]
        if np.linalg.norm(orthogonal_complement_residual(base, col)) <= TAU_RANK * np.linalg.norm(col):
            continue
        res = orthogonal_complement_residual(matrix[:, selected + [i]], y)
        val = float(res @ res)
        if val < best_val:
            best, best_val = i, val
    if best is None:
        raise RankDeficient("every candidate column is spanned by the selected ones")
    return best


def naive_ols_path(dictionary, y, n_iter: int) -> list[int]:
    """Iterate :func:`ols_select_naive` ``n_iter`` times (no stopping rule)."""
    selected: list[int] = []
    for _ in range(n_iter):
        selected.append(ols_select_naive(dictionary, selected, y))
    return selected


def warm_start_measurement(dictionary, y, alpha: float, dummy_seed: int):
    """Return ``(y + alpha * phi_d, phi_d)`` for a dummy atom ``phi_d``
    drawn from the dictionary's own ensemble."""
    if alpha == 0:
        raise ValueError("alpha must be nonzero")
    y = np.asarray(y, dtype=float)
    rng = make_rng(dummy_seed, "dummy-column")
    if isinstance(dictionary, Dictionary):
        dummy = dictionary.draw_columns(1, rng)[:, 0]
    else:
        m = np.asarray(dictionary).shape[0]
        dummy = rng.standard_normal(m) / math.sqrt(m)
        dummy /= np.linalg.norm(dummy)
    return y + alpha * dummy, dummy


def ols_warm_solve(dictionary, y, config: SolverConfig) -> SolveResult:
    """OLS warm-started with a dummy atom as the zeroth iteration.

    The measurement becomes ``y1 = y + alpha * phi_d`` and ``phi_d`` is
    placed in the support before the first identification; then
    ``config.iterations`` ordinary OLS steps follow.  The dummy never
    appears in ``selected`` or in the estimate.
    """
    ws = config.warm_start or WarmStart()
    matrix, y = _prepare(dictionary, y, config, config.iterations)
    m, n = matrix.shape
    if config.iterations + 1 > m:
        raise InvalidDimensions("the dummy column needs one spare measurement")
    alpha = float(np.linalg.norm(y)) if ws.alpha is None else float(ws.alpha)
    if alpha == 0.0:
        alpha = 1.0
    y1, dummy = warm_start_measurement(dictionary, y, alpha, ws.dummy_seed)
    augmented = np.column_stack([matrix, dummy])
    tol = config.stopping_tolerance(y)
    selected, coef, norms = _pursuit(augmented, y1, config.iterations, "ols", tol, preselected=(n,))
    real = selected[1:]
    result = _finish(real, coef[1:], norms, n, config.sparsity, config, "ols-warm")
    result.dummy_coefficient = float(coef[0])
    result.extra["alpha"] = alpha
    result.extra["dummy_column"] = dummy
    return result


def ols_extended(dictionary, y, K: int, L: int, config: SolverConfig | None = None) -> SolveResult:
    """Run ``L >= K`` OLS iterations, keep the ``K`` largest least-squares
    coefficients and re-solve on that support."""
    if config is None:
        config = SolverConfig(sparsity=K)
    matrix = check_dictionary(as_matrix(dictionary))
    m, n = matrix.shape
    upper = min(m, n) if L == K else min(m - 1, n)
    if not 1 <= K <= L <= upper:
        raise InvalidDimensions(f"need K <= L <= min(M-1, N); got K={K}, L={L}, M={m}, N={n}")
    y = check_measurement(y, m)
    tol = config.stopping_tolerance(y)
    selected, coef, norms = _pursuit(matrix, y, L, "ols", tol)
    cfg = SolverConfig(sparsity=K, max_iterations=L, tolerance=config.tolerance,
                       track_truth=config.track_truth)
    result = _finish(selected, coef, norms, n, K, cfg, "ols2k",
                     resolve=lambda support: _least_squares(matrix, y, support))
    result.extra["L"] = L
    return result


def solve(algorithm: str, dictionary, y, K: int, *, truth=None, tolerance=None,
          warm_alpha=None, dummy_seed=0, L=None) -> SolveResult:
    """Dispatch by algorithm name (``ols``, ``omp``, ``ols2k``, ``ols-warm``)."""
    if algorithm == "ols":
        return ols_solve(dictionary, y, SolverConfig(K, tolerance=tolerance, track_truth=truth))
    if algorithm == "omp":
        return omp_solve(dictionary, y, SolverConfig(K, tolerance=tolerance, track_truth=truth))
    if algorithm == "ols2k":
        m, n = as_matrix(dictionary).shape
        L = min(2 * K, m - 1, n) if L is None else L
        L = max(L, K)
        return ols_extended(dictionary, y, K, L,
                            SolverConfig(K, tolerance=tolerance, track_truth=truth))
    if algorithm == "ols-warm":
        cfg = SolverConfig(K, tolerance=tolerance, track_truth=truth,
                           warm_start=WarmStart(alpha=warm_alpha, dummy_seed=dummy_seed))
        return ols_warm_solve(dictionary, y, cfg)
    raise ValueError(f"unknown algorithm {algorithm!r}; choose from {ALGORITHMS}")
