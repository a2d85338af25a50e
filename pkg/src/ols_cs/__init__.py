"""Greedy sparse recovery with Orthogonal Least Squares and OMP."""

__version__ = "0.1.0"

from .dictionaries import (
    Dictionary,
    SparseSignal,
    coherence,
    gaussian_dictionary,
    hybrid_dictionary,
    load_dictionary,
    make_dictionary,
    measure,
    random_sparse_signal,
    save_dictionary,
)
from .estimators import ExtendedOLS, OrthogonalLeastSquares, OrthogonalMatchingPursuit
from .exceptions import (
    DegenerateColumn,
    DimensionMismatch,
    DomainError,
    EmptyGrid,
    InvalidDimensions,
    InvalidOrder,
    NotAchievable,
    OLSCSError,
    RankDeficient,
    TargetUnreachable,
)
from .solvers import (
    SolveResult,
    SolverConfig,
    WarmStart,
    naive_ols_path,
    ols_extended,
    ols_select_naive,
    ols_solve,
    ols_warm_solve,
    omp_solve,
    solve,
    warm_start_measurement,
)

__all__ = [name for name in dir() if not name.startswith("_")]
