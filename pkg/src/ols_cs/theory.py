"""Closed-form bounds, polynomials and auxiliary functions for OLS recovery.

Every probability returned here is clamped to ``[0, 1]``.  Functions that
can produce a negative (vacuous) raw value also expose the raw number, and
each clamp is counted in :data:`CLAMP_EVENTS` so sweeps can report how
often a bound was vacuous.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate
from scipy.special import beta as beta_fn
from scipy.special import ndtr

from .exceptions import DomainError, EmptyGrid, InvalidDimensions, NotAchievable

CLAMP_EVENTS: Counter = Counter()

#: Upper end of the exclusive-alignment regime for delta.
DELTA_EXCLUSIVE = 1.0 - 1.0 / math.sqrt(2.0)
DELTA_BRACKET = (1e-6, DELTA_EXCLUSIVE - 1e-6)
SIGMA_GRID_POINTS = 200
GL_NODES = 64
TAILS = ("two_sided", "doubled")


def clamp_probability(value: float, name: str = "probability") -> float:
    if value < 0.0 or value > 1.0:
        CLAMP_EVENTS[name] += 1
    return float(min(max(value, 0.0), 1.0))


def reset_clamp_events() -> None:
    CLAMP_EVENTS.clear()


def _q(x):
    """Standard normal upper tail."""
    return ndtr(-np.asarray(x, dtype=float))


# --- projected uncorrelated dictionaries ----------------------------------


def m_fn(n: int) -> float:
    """``(sqrt(n - 1) + 1)**2``."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    return (math.sqrt(n - 1) + 1.0) ** 2


def f_n(n: int, x: float) -> float:
    """Tail function ``(1/A_n) int_0^{sqrt(1-x)} u^n / sqrt(1-u^2) du``.

    ``A_n = B((n+1)/2, 1/2) / 2`` normalises ``f_n(0) = 1``.  The square-root
    singularity at ``u = 1`` is removed with ``u = sin t``, leaving the
    smooth integrand ``sin(t)**n`` on ``[0, arcsin(sqrt(1-x))]``.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"x must lie in [0, 1], got {x}")
    if x == 0.0:
        return 1.0
    if x == 1.0:
        return 0.0
    upper = math.asin(math.sqrt(1.0 - x))
    val, _ = integrate.quad(lambda t: math.sin(t) ** n, 0.0, upper,
                            epsabs=1e-14, epsrel=1e-13, limit=200)
    a_n = beta_fn((n + 1) / 2.0, 0.5) / 2.0
    return float(min(max(val / a_n, 0.0), 1.0))


def joint_correlation_bound(M: int, k: int, epsilon: float) -> float:
    """``1 - exp(-m(M-k-2) eps^2 / 2)``: probability that a projected,
    normalised Gaussian column correlates with a fixed unit vector by at
    most ``eps`` after ``k`` projections."""
    n = M - k - 2
    if n < 1:
        raise InvalidDimensions(f"need M - k - 2 >= 1, got M={M}, k={k}")
    return clamp_probability(1.0 - math.exp(-m_fn(n) * epsilon ** 2 / 2.0), "joint_correlation")


def szarek_min_singular_bound(M: int, K: int, epsilon: float) -> tuple[float, float]:
    """Level ``1 - sqrt(K/M) - eps`` and its probability ``1 - exp(-eps^2 M/2)``
    for the smallest singular value of an ``M x K`` N(0, 1/M) matrix.

    The level can be negative; callers decide whether it is useful.
    """
    if K > M or K < 0:
        raise InvalidDimensions(f"need 0 <= K <= M, got K={K}, M={M}")
    if epsilon < 0:
        raise DomainError("epsilon must be nonnegative")
    level = 1.0 - math.sqrt(K / M) - epsilon
    return level, 1.0 - math.exp(-epsilon ** 2 * M / 2.0)


def projected_norm_concentration(M: int, d: int, delta: float, L: int) -> float:
    """``max(0, 1 - 2L exp(-delta^2 (M-d)/8))``: all ``L`` projected norms
    stay within ``delta`` of their mean after projecting out ``d`` dims."""
    if not d < M:
        raise InvalidDimensions(f"need d < M, got d={d}, M={M}")
    if not 0 < delta < 1:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    if L < 1:
        raise DomainError("L must be >= 1")
    return clamp_probability(1.0 - 2.0 * L * math.exp(-delta ** 2 * (M - d) / 8.0),
                             "projected_norm")


def c0_gaussian(epsilon: float) -> float:
    return epsilon ** 2 / 8.0


def singular_value_retention_probability(M: int, K: int, sigma: float, delta: float, k: int = 0,
                       c0=c0_gaussian) -> float:
    """Probability that the projected ``M x K`` block keeps its smallest
    singular value above ``sigma * sqrt(1 - delta)`` after ``k`` projections:
    ``1 - 2(12/(1-sigma))^K e^{-c0((1-sigma)/2) M} - 2(K-k) e^{-(M-k) delta^2/8}``.
    """
    if not 0 < sigma < 1:
        return 0.0
    # log-space for the (12/(1-sigma))^K factor
    log_a = math.log(2.0) + K * math.log(12.0 / (1.0 - sigma)) - c0((1.0 - sigma) / 2.0) * M
    term_a = math.exp(log_a) if log_a < 700 else math.inf
    term_b = 2.0 * (K - k) * math.exp(-(M - k) * delta ** 2 / 8.0)
    return clamp_probability(1.0 - term_a - term_b, "singular_value_retention")


# --- recovery bound for Gaussian dictionaries -------------------------------


@dataclass
class BoundParams:
    """Inputs of the recovery lower bound.

    ``epsilon1`` / ``epsilon2`` default to the choices that make the last two
    failure terms equal ``K delta / N`` and ``2 K delta / N``.
    """

    M: int
    N: int
    K: int
    delta: float = 0.05
    epsilon1: float | None = None
    epsilon2: float | None = None
    c1: float = 1.0

    def __post_init__(self):
        if self.M1 < 1:
            raise InvalidDimensions(f"M - K - 1 must be >= 1, got M={self.M}, K={self.K}")
        if not 0 < self.delta < 1:
            raise DomainError(f"delta must lie in (0, 1), got {self.delta}")
        if self.K < 1 or self.N <= self.K:
            raise InvalidDimensions(f"need 1 <= K < N, got K={self.K}, N={self.N}")
        if self.epsilon1 is None:
            self.epsilon1 = math.sqrt(2.0 * math.log(self.N / (self.K * self.delta)) / self.K)
        if self.epsilon2 is None:
            self.epsilon2 = math.sqrt(8.0 * math.log(self.N / self.delta) / self.K)

    @property
    def M1(self) -> int:
        return self.M - self.K - 1

    @property
    def sigma(self) -> float:
        """Singular-value level, taking the printed inequality as equality.
        Nonpositive when the parameters leave no usable level."""
        s = math.sqrt(self.K / self.M1)
        first = 1.0 - s - self.epsilon1 * s
        inner = 1.0 - self.epsilon2 * s
        if first <= 0 or inner <= 0:
            return 0.0
        return first * math.sqrt(inner)


@dataclass
class RecoveryBound:
    value: float
    raw: float
    sigma: float
    terms: tuple[float, float, float]
    product_form: float
    params: BoundParams = field(repr=False)


def recovery_probability_lower_bound(params: BoundParams) -> RecoveryBound:
    """Three-term lower bound on exact-recovery probability, plus the
    product form it was simplified from."""
    p = params
    sigma = p.sigma
    t2 = math.exp(-p.epsilon1 ** 2 * p.K / 2.0)
    t3 = 2.0 * p.K * math.exp(-p.epsilon2 ** 2 * p.K / 8.0)
    if sigma <= 0:
        return RecoveryBound(0.0, -math.inf, sigma, (math.inf, t2, t3), 0.0, p)
    log_t1 = (math.log(p.c1) + 2.5 * math.log(p.N) - math.log(sigma) - 0.5 * math.log(p.K)
              - sigma ** 2 * p.M1 / (2.0 * p.K))
    t1 = math.exp(log_t1) if log_t1 < 700 else math.inf
    raw = 1.0 - t1 - t2 - t3
    return RecoveryBound(
        value=clamp_probability(raw, "recovery_bound"),
        raw=raw,
        sigma=sigma,
        terms=(t1, t2, t3),
        product_form=recovery_product_form(p, sigma),
        params=p,
    )


def recovery_product_form(params: BoundParams, sigma_min: float | None = None) -> float:
    """``(1 - K e^{-s^2 sqrt(M1)/K} e^{-M1 s^2/(2K)})^{N-K} (1 - e^{-cM})``.

    The last factor is :func:`singular_value_retention_probability` at the unprojected level
    ``1 - sqrt(K/M1) - eps1 sqrt(K/M1)`` with norm slack
    ``eps2 sqrt(K/M1)``.
    """
    p = params
    s = p.sigma if sigma_min is None else sigma_min
    if s <= 0:
        return 0.0
    inner = p.K * math.exp(-s ** 2 * math.sqrt(p.M1) / p.K - p.M1 * s ** 2 / (2.0 * p.K))
    if inner >= 1.0:
        return 0.0
    first = math.exp((p.N - p.K) * math.log1p(-inner))
    root = math.sqrt(p.K / p.M1)
    level = 1.0 - root - p.epsilon1 * root
    slack = min(p.epsilon2 * root, 1.0 - 1e-12)
    return clamp_probability(first * singular_value_retention_probability(p.M, p.K, level, slack), "product_form")


def constant_C(N: int, K: int, delta: float) -> float:
    """``(sqrt(32) + 1/ln(N/(delta K)) + sqrt(2/K))**2``."""
    if K < 1:
        raise DomainError("K must be >= 1")
    ratio = N / (delta * K)
    if ratio <= 1.0:
        raise DomainError(f"ln(N/(delta K)) must be positive, got ratio {ratio}")
    return (math.sqrt(32.0) + 1.0 / math.log(ratio) + math.sqrt(2.0 / K)) ** 2


def measurements_for_failure(N: int, K: int, delta: float) -> float:
    """Measurement count ``C K ln(N/(delta K)) + K + 1`` for failure <= 3 delta."""
    return constant_C(N, K, delta) * K * math.log(N / (delta * K)) + K + 1


# --- hybrid dictionaries ----------------------------------------------------


def kappa(delta: float) -> float:
    """``sqrt(2 delta - delta^2)``."""
    if not 0.0 <= delta <= 1.0:
        raise DomainError(f"delta must lie in [0, 1], got {delta}")
    return math.sqrt(max(2.0 * delta - delta * delta, 0.0))


def decorrelated_parameter(T: float, delta: float) -> float:
    """Effective bias amplitude ``T kappa(delta)`` left after projecting out
    an aligned column."""
    return T * kappa(delta)


def frobenius_bias_bound(r: int, delta: float) -> float:
    return math.sqrt(r) * kappa(delta)


def coherence_level(delta: float) -> float:
    """``1 - 4 delta + 2 delta^2``."""
    return 1.0 - 4.0 * delta + 2.0 * delta * delta


def g_ab(a: float, b: float, x):
    """``sqrt(a^2 + 4bx) - x - a ln((sqrt(a^2 + 4bx) + a) / (2b))``.

    Increasing for ``0 <= x <= b - a`` (its derivative is
    ``2b / (s + a) - 1`` with ``s = sqrt(a^2 + 4bx)``).
    """
    x = np.asarray(x, dtype=float)
    s = np.sqrt(a * a + 4.0 * b * x)
    return s - x - a * np.log((s + a) / (2.0 * b))


@dataclass
class HybridBoundParams:
    """Parameters of the alignment bound for hybrid columns.

    ``sigma_grid`` defaults to ``SIGMA_GRID_POINTS`` log-spaced points on
    ``(M - 1 + (r-1) T^2, 100 (M + r T^2))``.
    """

    M: int
    r: int
    T: float
    delta: float
    sigma_grid: np.ndarray | None = None

    def __post_init__(self):
        if self.M < 2:
            raise InvalidDimensions("M must be >= 2")
        if self.r < 1 or self.r > self.M:
            raise InvalidDimensions(f"need 1 <= r <= M, got r={self.r}")
        if not self.T > 0:
            raise DomainError("T must be positive")
        if not 0 < self.delta < 1:
            raise DomainError(f"delta must lie in (0, 1), got {self.delta}")
        if self.sigma_grid is None:
            lo = self.sigma_floor
            hi = 100.0 * (self.M + self.r * self.T ** 2)
            self.sigma_grid = np.geomspace(lo * (1 + 1e-9), hi, SIGMA_GRID_POINTS)
        else:
            grid = np.asarray(self.sigma_grid, dtype=float).ravel()
            self.sigma_grid = grid[grid > self.sigma_floor]
        if self.sigma_grid.size == 0:
            raise EmptyGrid("no sigma grid point exceeds M - 1 + (r-1) T^2")

    @property
    def sigma_floor(self) -> float:
        return self.M - 1 + (self.r - 1) * self.T ** 2

    @property
    def delta1(self) -> float:
        c = (1.0 - self.delta) ** 2
        return math.sqrt(c / (1.0 - c))


def g_sigma(M: int, r: int, T: float, sigma):
    """Exponent ``g(sigma)`` of the noise-norm factor ``1 - e^{g/2}``."""
    sigma = np.asarray(sigma, dtype=float)
    h = np.sqrt((M - 1) ** 2 + 4.0 * sigma * (r - 1) * T ** 2)
    return -sigma - (r - 1) * T ** 2 + (h - (M - 1) * np.log((M - 1 + h) / (2.0 * sigma)))


def _uniform_tail_expectation(M: int, T: float, level, tail: str) -> np.ndarray:
    """``E_u`` over ``u ~ U[0, T)`` of the Gaussian tail at ``sqrt(M)(level -+ u)``.

    Vectorised over ``level``.  Gauss-Legendre on panels split where the
    integrand switches from 0 to 1 (``u = level``), so the kink is resolved
    at any T; panels that fall outside ``[0, T]`` collapse to zero width.
    """
    level = np.atleast_1d(np.asarray(level, dtype=float))
    c = math.sqrt(M)
    width = 8.0 / c
    inner = np.clip(level[:, None] + np.array([-width, 0.0, width]), 0.0, T)
    edges = np.concatenate([np.zeros((level.size, 1)), inner, np.full((level.size, 1), T)], axis=1)
    x, w = leggauss(GL_NODES)
    lo, hi = edges[:, :-1, None], edges[:, 1:, None]
    u = lo + (x + 1.0) * (hi - lo) / 2.0
    a = level[:, None, None]
    if tail == "doubled":
        vals = 2.0 * _q(c * (a - u))
    else:
        vals = _q(c * (a - u)) + _q(c * (a + u))
    panel = (vals @ w) * (hi[..., 0] - lo[..., 0]) / 2.0
    return panel.sum(axis=1) / T


@dataclass
class PDeltaResult:
    value: float
    raw: float
    sigma_star: float
    g_star: float
    delta1: float
    tail: str


def p_delta_details(params: HybridBoundParams, tail: str = "two_sided") -> PDeltaResult:
    """Alignment probability lower bound ``p(delta)`` with its maximiser.

    ``P(|<phi/||phi||, a_j>| >= 1 - delta) >= sup_sigma (1 - e^{g(sigma)/2}) E_u[tail]``.

    ``tail="two_sided"`` uses the two-sided Gaussian tail
    ``Q(sqrt(M)(s d1 - u)) + Q(sqrt(M)(s d1 + u))``, ``s = sqrt(sigma)``;
    ``tail="doubled"`` uses ``2 Q(sqrt(M)(s d1 - u))``, which can exceed the
    true alignment probability.
    """
    if tail not in TAILS:
        raise ValueError(f"tail must be one of {TAILS}")
    p = params
    d1 = p.delta1
    grid = p.sigma_grid
    g = g_sigma(p.M, p.r, p.T, grid)
    factor = -np.expm1(g / 2.0)
    vals = np.where(factor > 0, factor * _uniform_tail_expectation(p.M, p.T, np.sqrt(grid) * d1, tail), 0.0)
    best_i = int(np.argmax(vals))
    best = float(vals[best_i])
    return PDeltaResult(
        value=clamp_probability(best, f"p_delta_{tail}"),
        raw=float(best),
        sigma_star=float(grid[best_i]),
        g_star=float(g[best_i]),
        delta1=d1,
        tail=tail,
    )


def p_delta(params: HybridBoundParams, tail: str = "two_sided") -> float:
    return p_delta_details(params, tail).value


def _check_poly_domain(L: int, p: float, r: int, min_L: int):
    if r < 1:
        raise DomainError("r must be >= 1")
    if L < min_L:
        raise DomainError(f"L must be >= {min_L}, got {L}")
    if not 0.0 <= p <= 1.0 / r + 1e-15:
        raise DomainError(f"p must lie in [0, 1/r] = [0, {1.0 / r}], got {p}")
    return min(p, 1.0 / r)


def poly_P(L: int, p: float, r: int) -> float:
    """Probability every one of ``r`` bins gets at least one of ``L`` balls
    when each ball lands in bin ``j`` with probability ``p``:
    ``sum_j (-1)^j C(r,j) (1 - j p)^L``."""
    p = _check_poly_domain(L, p, r, r)
    terms = [(-1) ** j * math.comb(r, j) * max(1.0 - j * p, 0.0) ** L for j in range(r + 1)]
    return clamp_probability(math.fsum(terms), "poly_P")


def poly_Q(L: int, p: float, r: int) -> float:
    """As :func:`poly_P` but with at least two balls per bin."""
    p = _check_poly_domain(L, p, r, 2 * r)
    outer = []
    for k in range(r + 1):
        base = max(1.0 - k * p, 0.0)
        inner = [math.comb(k, j) * math.perm(L, j) * p ** j * base ** (L - j) for j in range(k + 1)]
        outer.append((-1) ** k * math.comb(r, k) * math.fsum(inner))
    return clamp_probability(math.fsum(outer), "poly_Q")


def coherence_probability_bound(K: int, r: int, delta: float, pd: float, L: int | None = None) -> float:
    """Probability that coherence exceeds :func:`coherence_level` ``(delta)``.

    ``L`` (default ``2r``) is the number of columns entering the
    inclusion-exclusion sum.  ``K`` is accepted for call-site symmetry and
    only bounds ``L``.
    """
    if not 0 < delta < DELTA_EXCLUSIVE:
        raise DomainError(f"delta must lie in (0, {DELTA_EXCLUSIVE:.6f})")
    L = 2 * r if L is None else L
    return poly_Q(L, pd, r)


def solve_delta(target: float, M: int, r: int, T: float, *, tail: str = "two_sided",
                n_columns: int = 1, tol: float = 1e-10, sigma_grid=None) -> float:
    """Smallest ``delta`` in the exclusive bracket with ``F(delta) >= target``.

    ``F`` is ``p_delta`` for ``n_columns = 1``; otherwise the probability
    that the ``n_columns`` columns align with every basis vector,
    ``poly_P(n_columns, p_delta, r)``.  Found by bisection.
    """
    if not 0.0 <= target < 1.0:
        raise DomainError(f"target must lie in [0, 1), got {target}")
    if n_columns < r:
        raise DomainError("n_columns must be >= r")

    def score(d):
        pd = p_delta(HybridBoundParams(M, r, T, d, sigma_grid), tail)
        if n_columns == 1:
            return pd
        return poly_P(n_columns, min(pd, 1.0 / r), r)

    lo, hi = DELTA_BRACKET
    if score(lo) >= target:
        return lo
    if score(hi) < target:
        raise NotAchievable(f"p(delta) stays below {target} on the delta bracket (M={M}, T={T})")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if score(mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi
