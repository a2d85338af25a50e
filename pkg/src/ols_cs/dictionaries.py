"""Random sensing matrices, sparse test signals and coherence.

Two ensembles are provided:

* the uncorrelated Gaussian ensemble, entries i.i.d. ``N(0, 1/M)``;
* the generalized hybrid ensemble of order ``r``,
  ``phi_i = n_i + sum_j u_ij a_j`` with ``n_i ~ N(0, I/M)``,
  ``u_ij ~ U[0, T)`` and ``a_1..a_r`` an orthonormal set in ``R^M``.

Hybrid columns must be normalised before greedy identification, so both
generators return the normalised matrix in :attr:`Dictionary.matrix` and
keep the unscaled draw in :attr:`Dictionary.raw_matrix`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._rng import make_rng
from .exceptions import DimensionMismatch, InvalidDimensions, InvalidOrder
from .utils.io import atomic_write_text

GAUSSIAN = "gaussian"
HYBRID = "hybrid"
VALUE_MODELS = ("gaussian", "unit")


@dataclass
class Dictionary:
    matrix: np.ndarray
    raw_matrix: np.ndarray
    kind: str = GAUSSIAN
    r: int = 0
    T: float = 0.0
    basis: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    bias_coeffs: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    seed: int | None = None
    normalized: bool = True
    legacy_ones: bool = False

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_columns(self) -> int:
        return self.matrix.shape[1]

    @property
    def bias_scale(self) -> float:
        """Length of the bias direction (``sqrt(M)`` for the all-ones vector)."""
        return math.sqrt(self.n_rows) if self.legacy_ones else 1.0

    def draw_columns(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Fresh columns from the same ensemble, normalised like :attr:`matrix`."""
        m = self.n_rows
        cols = rng.standard_normal((m, n)) / math.sqrt(m)
        if self.kind == HYBRID:
            u = rng.uniform(0.0, self.T, size=(n, self.r))
            cols += self.bias_scale * (self.basis @ u.T)
        if self.normalized:
            cols /= np.linalg.norm(cols, axis=0)
        return cols

    def metadata(self) -> dict[str, str]:
        m, n = self.shape
        return {
            "kind": self.kind,
            "M": str(m),
            "N": str(n),
            "r": str(self.r),
            "T": repr(float(self.T)),
            "seed": "" if self.seed is None else str(self.seed),
            "normalized": str(self.normalized).lower(),
            "legacy_ones": str(self.legacy_ones).lower(),
        }


@dataclass
class SparseSignal:
    support: np.ndarray
    values: np.ndarray
    n_features: int

    def __post_init__(self):
        self.support = np.asarray(self.support, dtype=np.intp)
        self.values = np.asarray(self.values, dtype=float)
        if self.support.shape != self.values.shape:
            raise DimensionMismatch("support and values differ in length")
        if len(np.unique(self.support)) != len(self.support):
            raise ValueError("support indices must be distinct")
        if np.any(self.support < 0) or np.any(self.support >= self.n_features):
            raise ValueError("support index out of range")

    @property
    def sparsity(self) -> int:
        return len(self.support)

    def to_dense(self) -> np.ndarray:
        x = np.zeros(self.n_features)
        x[self.support] = self.values
        return x


def _normalize_columns(raw: np.ndarray) -> np.ndarray:
    return raw / np.linalg.norm(raw, axis=0)


def _gaussian_noise(m: int, n: int, seed) -> np.ndarray:
    return make_rng(seed, "noise").standard_normal((m, n)) / math.sqrt(m)


def gaussian_dictionary(M: int, N: int, seed: int, normalize: bool = True) -> Dictionary:
    """M x N matrix with i.i.d. ``N(0, 1/M)`` entries."""
    if M < 1 or N < 1:
        raise InvalidDimensions(f"need M >= 1 and N >= 1, got M={M}, N={N}")
    raw = _gaussian_noise(M, N, seed)
    matrix = _normalize_columns(raw) if normalize else raw.copy()
    return Dictionary(matrix=matrix, raw_matrix=raw, kind=GAUSSIAN, seed=seed, normalized=normalize)


def random_orthonormal_set(m: int, r: int, rng: np.random.Generator) -> np.ndarray:
    """First ``r`` columns of a Haar-distributed rotation of ``R^m``."""
    g = rng.standard_normal((m, r))
    q, rr = np.linalg.qr(g)
    return q * np.sign(np.diag(rr))


def hybrid_dictionary(
    M: int,
    N: int,
    r: int,
    T: float,
    seed: int,
    *,
    normalize: bool = True,
    legacy_ones: bool = False,
) -> Dictionary:
    """Generalized hybrid dictionary of order ``r`` and bias amplitude ``T``.

    The bias directions are an orthonormal set obtained by a seeded
    random rotation.  With ``legacy_ones`` (``r`` must be 1) the single
    bias vector is the all-ones vector, whose length is ``sqrt(M)``.
    The noise part uses the same stream as :func:`gaussian_dictionary`, so
    for a fixed seed the hybrid draw tends to the Gaussian one as ``T -> 0``.
    """
    if M < 1 or N < 1:
        raise InvalidDimensions(f"need M >= 1 and N >= 1, got M={M}, N={N}")
    if r < 1 or r > M:
        raise InvalidOrder(f"order r={r} must satisfy 1 <= r <= M={M}")
    if not T > 0:
        raise ValueError(f"bias amplitude T must be positive, got {T}")
    if legacy_ones:
        if r != 1:
            raise InvalidOrder("the all-ones bias model is defined for r=1 only")
        basis = np.full((M, 1), 1.0 / math.sqrt(M))
        scale = math.sqrt(M)
    else:
        basis = random_orthonormal_set(M, r, make_rng(seed, "basis"))
        scale = 1.0
    u = make_rng(seed, "bias").uniform(0.0, T, size=(N, r))
    raw = _gaussian_noise(M, N, seed) + scale * (basis @ u.T)
    matrix = _normalize_columns(raw) if normalize else raw.copy()
    return Dictionary(
        matrix=matrix,
        raw_matrix=raw,
        kind=HYBRID,
        r=r,
        T=float(T),
        basis=basis,
        bias_coeffs=u,
        seed=seed,
        normalized=normalize,
        legacy_ones=legacy_ones,
    )


def make_dictionary(kind: str, M: int, N: int, seed: int, *, r: int = 1, T: float = 100.0,
                    normalize: bool = True, legacy_ones: bool = False) -> Dictionary:
    if kind == GAUSSIAN:
        return gaussian_dictionary(M, N, seed, normalize=normalize)
    if kind == HYBRID:
        return hybrid_dictionary(M, N, r, T, seed, normalize=normalize, legacy_ones=legacy_ones)
    raise ValueError(f"unknown dictionary kind {kind!r}")


def as_matrix(dictionary) -> np.ndarray:
    if isinstance(dictionary, Dictionary):
        return dictionary.matrix
    return np.asarray(dictionary, dtype=float)


def coherence(dictionary) -> float:
    """Worst-case coherence: largest normalised |<phi_i, phi_j>|, i != j."""
    a = as_matrix(dictionary)
    if a.shape[1] < 2:
        raise InvalidDimensions("coherence needs at least two columns")
    unit = _normalize_columns(a)
    gram = np.abs(unit.T @ unit)
    np.fill_diagonal(gram, 0.0)
    return float(min(gram.max(), 1.0))


def random_sparse_signal(N: int, K: int, seed: int, value_model: str = "gaussian") -> SparseSignal:
    """K-sparse signal with a uniformly random support.

    ``value_model="gaussian"`` draws standard normal values, ``"unit"``
    draws +-1 with equal probability.
    """
    if not 1 <= K < N:
        raise InvalidDimensions(f"need 1 <= K < N, got K={K}, N={N}")
    rng = make_rng(seed, "signal")
    support = rng.choice(N, size=K, replace=False)
    if value_model == "gaussian":
        values = rng.standard_normal(K)
        # a draw of exactly zero would change the sparsity
        values[values == 0.0] = 1.0
    elif value_model == "unit":
        values = rng.choice([-1.0, 1.0], size=K)
    else:
        raise ValueError(f"unknown value model {value_model!r}; choose from {VALUE_MODELS}")
    return SparseSignal(support=support, values=values, n_features=N)


def measure(dictionary, signal: SparseSignal) -> np.ndarray:
    """Noiseless measurements ``y = Phi x`` using the normalised columns."""
    a = as_matrix(dictionary)
    if signal.n_features != a.shape[1]:
        raise DimensionMismatch(
            f"signal has {signal.n_features} features, dictionary has {a.shape[1]} columns"
        )
    return a[:, signal.support] @ signal.values


# --- CSV round trip -------------------------------------------------------


def save_matrix_csv(matrix: np.ndarray, path) -> None:
    """One CSV row per matrix row, 17 significant digits (round-trips float64)."""
    lines = [",".join(repr(float(v)) for v in row) for row in np.atleast_2d(matrix)]
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_matrix_csv(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=float, ndmin=2))


def metadata_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta")


def save_dictionary(dictionary: Dictionary, path) -> Path:
    """Write the normalised matrix as CSV plus a ``key=value`` sidecar."""
    save_matrix_csv(dictionary.matrix, path)
    meta = metadata_path(path)
    text = "".join(f"{k}={v}\n" for k, v in dictionary.metadata().items())
    atomic_write_text(meta, text)
    return meta


def read_metadata(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def load_dictionary(path) -> Dictionary:
    """Inverse of :func:`save_dictionary`.

    The ensemble parameters (basis, bias coefficients, raw matrix) are
    regenerated from the recorded seed when one is present.
    """
    matrix = load_matrix_csv(path)
    meta_file = metadata_path(path)
    if not meta_file.exists():
        return Dictionary(matrix=matrix, raw_matrix=matrix.copy(), kind="external")
    meta = read_metadata(meta_file)
    kind = meta.get("kind", "external")
    seed = int(meta["seed"]) if meta.get("seed") else None
    normalized = meta.get("normalized", "true") == "true"
    m, n = matrix.shape
    if seed is not None and kind in (GAUSSIAN, HYBRID):
        regen = make_dictionary(
            kind, m, n, seed,
            r=int(meta.get("r", 1)) or 1,
            T=float(meta.get("T", 0.0)) or 1.0,
            normalize=normalized,
            legacy_ones=meta.get("legacy_ones", "false") == "true",
        )
        regen.matrix = matrix
        return regen
    return Dictionary(matrix=matrix, raw_matrix=matrix.copy(), kind=kind, seed=seed,
                      normalized=normalized)
