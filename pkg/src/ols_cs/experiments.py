"""Seeded Monte Carlo harness.

Every trial draws a fresh dictionary and signal from a stream keyed by
``(master_seed, "trial", M, K, trial_index)``, so a trial's outcome does not
depend on which worker runs it or in which order.  Aggregation only sums
counters, and CSV output omits wall-clock columns unless asked for, which
keeps tables byte-identical across ``jobs`` settings.
"""

from __future__ import annotations

import csv
import io
import math
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import Sequence

import numpy as np
from scipy import stats

from ._rng import stream_key
from .dictionaries import make_dictionary, measure, random_sparse_signal
from .exceptions import NotAchievable, OLSCSError, TargetUnreachable
from .solvers import ALGORITHMS, omp_solve, solve, SolverConfig
from .theory import decorrelated_parameter, solve_delta
from .utils.io import atomic_write_text


@dataclass
class ExperimentConfig:
    kind: str = "gaussian"
    M_values: Sequence[int] = (64,)
    N: int = 256
    K_values: Sequence[int] = (12,)
    r: int = 1
    T: float = 100.0
    legacy_ones: bool = False
    trials: int = 1000
    algorithms: Sequence[str] = ("ols",)
    master_seed: int = 0
    target: float = 0.95
    value_model: str = "gaussian"
    jobs: int = 1

    def __post_init__(self):
        self.M_values = tuple(int(m) for m in self.M_values)
        self.K_values = tuple(int(k) for k in self.K_values)
        self.algorithms = tuple(self.algorithms)
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if any(m > self.N or m < 1 for m in self.M_values):
            raise ValueError(f"every M must lie in [1, N={self.N}]")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise ValueError(f"unknown algorithm {a!r}; choose from {ALGORITHMS}")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")


@dataclass
class AlgorithmOutcome:
    selected: list[int]
    correct_prefix: int
    success: bool
    wall_time: float
    error: str | None = None


@dataclass
class TrialRecord:
    M: int
    K: int
    trial_index: int
    seed: int
    support: list[int]
    outcomes: dict[str, AlgorithmOutcome] = field(default_factory=dict)


def trial_seed(master_seed: int, M: int, K: int, trial_index: int) -> int:
    return stream_key(master_seed, "trial", M, K, trial_index)


def _leading_true(flags) -> int:
    n = 0
    for f in flags:
        if not f:
            break
        n += 1
    return n


def run_trial(config: ExperimentConfig, M: int, K: int, trial_index: int) -> TrialRecord:
    """One dictionary, one planted signal, every requested algorithm."""
    seed = trial_seed(config.master_seed, M, K, trial_index)
    dictionary = make_dictionary(config.kind, M, config.N, seed, r=config.r, T=config.T,
                                 legacy_ones=config.legacy_ones)
    signal = random_sparse_signal(config.N, K, seed, config.value_model)
    y = measure(dictionary, signal)
    truth = sorted(int(s) for s in signal.support)
    record = TrialRecord(M=M, K=K, trial_index=trial_index, seed=seed, support=truth)
    for algo in config.algorithms:
        start = time.perf_counter()
        try:
            res = solve(algo, dictionary, y, K, truth=truth, dummy_seed=seed)
        except OLSCSError as exc:
            record.outcomes[algo] = AlgorithmOutcome([], 0, False, time.perf_counter() - start,
                                                     f"{type(exc).__name__}: {exc}")
            continue
        elapsed = time.perf_counter() - start
        record.outcomes[algo] = AlgorithmOutcome(
            selected=res.selected,
            correct_prefix=_leading_true(res.iteration_correct[:K]),
            success=bool(res.exact_recovery),
            wall_time=elapsed,
        )
    return record


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    ci = stats.binomtest(successes, trials).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass
class SweepRow:
    algorithm: str
    M: int
    N: int
    K: int
    trials: int
    success_count: int
    joint_success: list[int]
    errors: int = 0
    times: list[float] = field(default_factory=list, repr=False)

    @property
    def success_rate(self) -> float:
        return self.success_count / self.trials

    @property
    def ci(self) -> tuple[float, float]:
        return wilson_interval(self.success_count, self.trials)

    @property
    def half_width(self) -> float:
        lo, hi = self.ci
        return (hi - lo) / 2.0

    @property
    def median_time(self) -> float:
        return float(np.median(self.times)) if self.times else math.nan


SWEEP_COLUMNS = ["algorithm", "M", "N", "K", "trials", "success_count", "success_rate",
                 "ci_low", "ci_high", "errors", "joint_success"]
TIMING_COLUMNS = ["median_time_s", "mean_time_s"]


class SweepTable:
    def __init__(self, rows: list[SweepRow], config: ExperimentConfig | None = None):
        self.rows = rows
        self.config = config

    def __iter__(self):
        return iter(self.rows)

    def __len__(self):
        return len(self.rows)

    def get(self, algorithm: str, M: int, K: int | None = None) -> SweepRow:
        for row in self.rows:
            if row.algorithm == algorithm and row.M == M and (K is None or row.K == K):
                return row
        raise KeyError((algorithm, M, K))

    def to_csv(self, include_timing: bool = False) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS + (TIMING_COLUMNS if include_timing else []))
        for row in self.rows:
            lo, hi = row.ci
            values = [row.algorithm, row.M, row.N, row.K, row.trials, row.success_count,
                      repr(row.success_rate), repr(lo), repr(hi), row.errors,
                      ";".join(str(c) for c in row.joint_success)]
            if include_timing:
                values += [repr(row.median_time), repr(float(np.mean(row.times)) if row.times else math.nan)]
            writer.writerow(values)
        return buf.getvalue()

    def write_csv(self, path, include_timing: bool = False) -> None:
        atomic_write_text(path, self.to_csv(include_timing))


def _trial_batch(args):
    config, M, K, indices = args
    return [run_trial(config, M, K, i) for i in indices]


def _chunks(n: int, size: int):
    return [list(range(i, min(i + size, n))) for i in range(0, n, size)]


def run_trials(config: ExperimentConfig, M: int, K: int, executor=None) -> list[TrialRecord]:
    if executor is None:
        return [run_trial(config, M, K, i) for i in range(config.trials)]
    size = max(1, math.ceil(config.trials / (4 * config.jobs)))
    batches = executor.map(_trial_batch, [(config, M, K, c) for c in _chunks(config.trials, size)])
    return [rec for batch in batches for rec in batch]


def aggregate(records: list[TrialRecord], config: ExperimentConfig, M: int, K: int) -> list[SweepRow]:
    rows = []
    for algo in config.algorithms:
        joint = [0] * K
        success = errors = 0
        times = []
        for rec in records:
            out = rec.outcomes[algo]
            success += out.success
            errors += out.error is not None
            times.append(out.wall_time)
            for i in range(out.correct_prefix):
                joint[i] += 1
        rows.append(SweepRow(algo, M, config.N, K, len(records), success, joint, errors, times))
    return rows


class _Pool:
    """Context manager yielding a process pool, or ``None`` for serial runs."""

    def __init__(self, jobs: int):
        self.jobs = jobs
        self.executor = None

    def __enter__(self):
        if self.jobs > 1:
            self.executor = ProcessPoolExecutor(max_workers=self.jobs)
        return self.executor

    def __exit__(self, *exc):
        if self.executor is not None:
            self.executor.shutdown()
        return False


def recovery_sweep(config: ExperimentConfig) -> SweepTable:
    """Success counts for every (algorithm, K, M) in the config grid."""
    rows = []
    with _Pool(config.jobs) as ex:
        for K in config.K_values:
            for M in config.M_values:
                rows.extend(aggregate(run_trials(config, M, K, ex), config, M, K))
    return SweepTable(rows, config)


# --- conditional per-iteration success ------------------------------------


@dataclass
class ConditionalRow:
    algorithm: str
    M: int
    K: int
    iteration: int
    joint_count: int
    prior_count: int

    @property
    def conditional(self) -> float | None:
        """``P(S_i) / P(S_{i-1})``; ``None`` when no trial survived to ``i - 1``."""
        if self.prior_count == 0:
            return None
        return self.joint_count / self.prior_count


CONDITIONAL_COLUMNS = ["algorithm", "M", "K", "iteration", "joint_count", "prior_count", "conditional"]


class ConditionalTable:
    def __init__(self, rows: list[ConditionalRow]):
        self.rows = rows

    def __iter__(self):
        return iter(self.rows)

    def series(self, algorithm: str, M: int) -> list[ConditionalRow]:
        return [r for r in self.rows if r.algorithm == algorithm and r.M == M]

    def trend(self, algorithm: str, M: int) -> tuple[float, float]:
        """One-sided Spearman test of an increasing conditional in ``i``.

        Returns ``(rho, p)``; absent conditionals are dropped.  Fewer than
        three defined points gives ``(nan, 1.0)``.
        """
        pts = [(r.iteration, r.conditional) for r in self.series(algorithm, M) if r.conditional is not None]
        if len(pts) < 3 or len({c for _, c in pts}) < 2:
            return math.nan, 1.0
        x, c = zip(*pts)
        res = stats.spearmanr(x, c, alternative="greater")
        return float(res.statistic), float(res.pvalue)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CONDITIONAL_COLUMNS)
        for r in self.rows:
            c = r.conditional
            writer.writerow([r.algorithm, r.M, r.K, r.iteration, r.joint_count, r.prior_count,
                             "" if c is None else repr(c)])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        atomic_write_text(path, self.to_csv())


def conditional_from_sweep(table: SweepTable) -> ConditionalTable:
    rows = []
    for sr in table:
        prior = sr.trials
        for i, joint in enumerate(sr.joint_success, start=1):
            rows.append(ConditionalRow(sr.algorithm, sr.M, sr.K, i, joint, prior))
            prior = joint
    return ConditionalTable(rows)


def conditional_success(config: ExperimentConfig) -> ConditionalTable:
    return conditional_from_sweep(recovery_sweep(config))


# --- measurements needed for a target success rate ------------------------


@dataclass
class MStarRow:
    K: int
    M_star: int
    success_rate: float
    evaluations: int


def _rate_cache(config: ExperimentConfig, K: int, algorithm: str, executor):
    cache: dict[int, float] = {}

    def rate(M: int) -> float:
        if M not in cache:
            rows = aggregate(run_trials(_single(config, algorithm), M, K, executor),
                             _single(config, algorithm), M, K)
            cache[M] = rows[0].success_rate
        return cache[M]

    return rate, cache


def _single(config: ExperimentConfig, algorithm: str) -> ExperimentConfig:
    if tuple(config.algorithms) == (algorithm,):
        return config
    d = asdict(config)
    d["algorithms"] = (algorithm,)
    return ExperimentConfig(**d)


def smallest_m_for_target(rate, grid: Sequence[int], target: float) -> int:
    """Binary search on ``grid`` assuming ``rate`` is nondecreasing, then a
    scan of two grid steps either side of the hit for an earlier success."""
    grid = list(grid)
    if rate(grid[-1]) < target:
        raise TargetUnreachable(f"success rate {rate(grid[-1]):.3f} < {target} at M={grid[-1]}")
    lo, hi = 0, len(grid) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if rate(grid[mid]) >= target:
            hi = mid
        else:
            lo = mid + 1
    for j in range(max(0, hi - 2), min(len(grid), hi + 3)):
        if rate(grid[j]) >= target:
            return grid[j]
    return grid[hi]


def measurements_for_target(config: ExperimentConfig, M_grid: Sequence[int] | None = None,
                            algorithm: str = "ols") -> list[MStarRow]:
    """Smallest ``M`` in ``M_grid`` (default ``K+1 .. N``) whose success rate
    reaches ``config.target``, for every ``K``."""
    rows = []
    with _Pool(config.jobs) as ex:
        for K in config.K_values:
            grid = list(M_grid) if M_grid is not None else list(range(K + 1, config.N + 1))
            rate, cache = _rate_cache(config, K, algorithm, ex)
            m_star = smallest_m_for_target(rate, grid, config.target)
            rows.append(MStarRow(K, m_star, cache[m_star], len(cache)))
    return rows


MSTAR_COLUMNS = ["K", "M_star", "success_rate", "evaluations", "K_log_N_over_K"]


def mstar_csv(rows: list[MStarRow], N: int) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MSTAR_COLUMNS)
    for r in rows:
        writer.writerow([r.K, r.M_star, repr(r.success_rate), r.evaluations, repr(r.K * math.log(N / r.K))])
    return buf.getvalue()


@dataclass
class LinearFit:
    slope: float
    intercept: float
    r_squared: float


def fit_mstar(rows: list[MStarRow], N: int) -> LinearFit:
    """Least-squares line ``M* = a K ln(N/K) + b``."""
    x = [r.K * math.log(N / r.K) for r in rows]
    y = [r.M_star for r in rows]
    res = stats.linregress(x, y)
    return LinearFit(float(res.slope), float(res.intercept), float(res.rvalue ** 2))


# --- runtime scaling ----------------------------------------------------------


@dataclass
class TimingRow:
    varied: str
    value: int
    M: int
    N: int
    K: int
    median_time: float
    runs: int


def _timing_instance(M, N, K, seed):
    d = make_dictionary("gaussian", M, N, seed)
    sig = random_sparse_signal(N, K, seed)
    return d, measure(d, sig)


def time_solver(M: int, N: int, K: int, *, algorithm: str = "ols", repeats: int = 21,
                warmup: int = 2, seed: int = 0) -> float:
    """Median wall time of ``repeats`` solves on one fixed instance.

    Dictionary generation is outside the timed region.
    """
    d, y = _timing_instance(M, N, K, stream_key(seed, "timing", M, N, K))
    for _ in range(warmup):
        solve(algorithm, d, y, K)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        solve(algorithm, d, y, K)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def runtime_scaling(varied: str, values: Sequence[int], *, M: int = 200, N: int = 2000, K: int = 10,
                    algorithm: str = "ols", repeats: int = 21, warmup: int = 2,
                    seed: int = 0) -> list[TimingRow]:
    """Median solver time while one of ``K``, ``M``, ``N`` varies.  Serial."""
    if varied not in ("K", "M", "N"):
        raise ValueError("varied must be one of 'K', 'M', 'N'")
    if repeats < 21:
        raise ValueError("use at least 21 timed repeats per point")
    rows = []
    for v in values:
        dims = {"M": M, "N": N, "K": K, varied: int(v)}
        t = time_solver(dims["M"], dims["N"], dims["K"], algorithm=algorithm, repeats=repeats,
                        warmup=warmup, seed=seed)
        rows.append(TimingRow(varied, int(v), dims["M"], dims["N"], dims["K"], t, repeats))
    return rows


def loglog_slope(rows: list[TimingRow]) -> float:
    x = np.log([r.value for r in rows])
    y = np.log([r.median_time for r in rows])
    return float(stats.linregress(x, y).slope)


TIMING_COLUMNS_SCALING = ["varied", "value", "M", "N", "K", "median_time_s", "runs"]


def timing_csv(rows: list[TimingRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TIMING_COLUMNS_SCALING)
    for r in rows:
        writer.writerow([r.varied, r.value, r.M, r.N, r.K, repr(r.median_time), r.runs])
    return buf.getvalue()


# --- decorrelation schedule -------------------------------------------------


@dataclass
class ScheduleRow:
    iteration: int
    T: float
    delta: float | None


def decorrelation_schedule(M: int, T0: float = 100.0, K: int = 12, *, target: float = 0.99,
                           tail: str = "doubled", strict: bool = False) -> list[ScheduleRow]:
    """Bias amplitudes ``T_k`` left after ``k`` aligned selections.

    At step ``k`` the smallest ``delta_k`` is found for which at least one
    of ``k + 1`` columns aligns with the bias direction with probability
    ``target``; then ``T_{k+1} = T_k sqrt(2 delta_k - delta_k^2)``.  When no
    ``delta`` reaches the target the schedule ends there with
    ``delta = None``, or ``NotAchievable`` is raised if ``strict``.
    """
    rows = []
    T = float(T0)
    for k in range(K):
        try:
            d = solve_delta(target, M, 1, T, tail=tail, n_columns=k + 1)
        except NotAchievable as exc:
            if strict:
                raise NotAchievable(str(exc), iteration=k) from exc
            rows.append(ScheduleRow(k, T, None))
            return rows
        rows.append(ScheduleRow(k, T, d))
        T = decorrelated_parameter(T, d)
    rows.append(ScheduleRow(K, T, None))
    return rows


SCHEDULE_COLUMNS = ["iteration", "T", "delta"]


def schedule_csv(rows: list[ScheduleRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SCHEDULE_COLUMNS)
    for r in rows:
        writer.writerow([r.iteration, repr(r.T), "" if r.delta is None else repr(r.delta)])
    return buf.getvalue()


@dataclass
class FirstIterationRow:
    iteration: int
    T: float
    sparsity: int
    trials: int
    successes: int

    @property
    def rate(self) -> float:
        return self.successes / self.trials

    @property
    def ci(self) -> tuple[float, float]:
        return wilson_interval(self.successes, self.trials)


def omp_first_iteration_success(schedule: list[ScheduleRow], M: int, N: int, K: int, *,
                                trials: int = 1000, master_seed: int = 0,
                                value_model: str = "gaussian") -> list[FirstIterationRow]:
    """OMP's first pick lands in the support, on hybrid dictionaries with
    bias ``T_k`` and a ``(K - k)``-sparse signal."""
    out = []
    for row in schedule:
        k = row.iteration
        if k >= K:
            break
        hits = 0
        for t in range(trials):
            seed = stream_key(master_seed, "first-iteration", M, k, t)
            d = make_dictionary("hybrid", M, N, seed, r=1, T=row.T)
            sig = random_sparse_signal(N, K - k, seed, value_model)
            res = omp_solve(d, measure(d, sig), SolverConfig(sparsity=1))
            hits += res.selected[0] in set(sig.support.tolist())
        out.append(FirstIterationRow(k, row.T, K - k, trials, hits))
    return out


def first_iteration_csv(rows: list[FirstIterationRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["iteration", "T", "sparsity", "trials", "successes", "rate", "ci_low", "ci_high"])
    for r in rows:
        lo, hi = r.ci
        writer.writerow([r.iteration, repr(r.T), r.sparsity, r.trials, r.successes,
                         repr(r.rate), repr(lo), repr(hi)])
    return buf.getvalue()


# --- manifest -------------------------------------------------------------


def run_manifest(config, command: str = "", extra: dict | None = None) -> str:
    """Plain ``key=value`` record of a run's configuration and environment."""
    from . import __version__

    items = {"command": command, "version": __version__, "python": sys.version.split()[0],
             "numpy": np.__version__, "platform": platform.platform(),
             "started_utc": datetime.now(timezone.utc).isoformat(timespec="seconds")}
    if config is not None:
        cfg = asdict(config) if hasattr(config, "__dataclass_fields__") else dict(config)
        items.update({f"config.{k}": v for k, v in cfg.items()})
    items.update(extra or {})
    return "".join(f"{k}={v}\n" for k, v in items.items())
