"""Command-line entry point: ``ols-cs <subcommand> ...``.

Exit status is 0 on success, 2 for usage errors (nothing is computed or
written) and 1 for runtime failures.  Files are written through a temporary
file and renamed into place, so a failed run never leaves partial output.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

from . import experiments as ex
from . import theory as th
from .dictionaries import load_dictionary, make_dictionary, measure, random_sparse_signal, save_dictionary
from .exceptions import OLSCSError
from .linalg import TAU_NUM, TAU_RANK
from .solvers import ALGORITHMS, DEFAULT_RELATIVE_TOLERANCE, solve
from .utils.io import atomic_write_text

SEED_ENV = "OLS_CS_SEED"

NUMERICS_NOTE = (
    f"Numerics: a projected column counts as zero when its norm is <= {TAU_RANK:g} times the "
    f"original column norm; internal consistency checks use {TAU_NUM:g}; the solver stops once "
    f"||r|| < tol, default {DEFAULT_RELATIVE_TOLERANCE:g}*||y||. Ties in the selection rule go "
    f"to the lowest column index. The environment variable {SEED_ENV}, when set, overrides --seed."
)


def int_range(text: str) -> list[int]:
    """``start:stop:step`` (stop inclusive), ``a,b,c`` or a single integer."""
    try:
        if ":" in text:
            parts = [int(p) for p in text.split(":")]
            if len(parts) == 2:
                parts.append(1)
            start, stop, step = parts
            if step <= 0 or stop < start:
                raise ValueError
            return list(range(start, stop + 1, step))
        values = [int(p) for p in text.split(",") if p.strip()]
        if not values:
            raise ValueError
        return values
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected start:stop:step or a comma list of integers, got {text!r}")


def algo_list(text: str) -> list[str]:
    algos = [a.strip() for a in text.split(",") if a.strip()]
    bad = [a for a in algos if a not in ALGORITHMS]
    if bad or not algos:
        raise argparse.ArgumentTypeError(f"unknown algorithm(s) {bad}; choose from {', '.join(ALGORITHMS)}")
    return algos


def positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def probability(text: str) -> float:
    v = float(text)
    if not 0.0 <= v < 1.0:
        raise argparse.ArgumentTypeError(f"expected a value in [0, 1), got {v}")
    return v


# --- parser ---------------------------------------------------------------


def _sub(subparsers, name, help_text):
    return subparsers.add_parser(name, help=help_text, description=help_text, epilog=NUMERICS_NOTE,
                                 formatter_class=argparse.ArgumentDefaultsHelpFormatter)


def _dict_flags(p, ranged: bool):
    p.add_argument("--dict", choices=["gaussian", "hybrid"], default="gaussian", help="dictionary ensemble")
    p.add_argument("--M", type=int_range if ranged else positive_int, required=True,
                   help="measurements" + (" (start:stop:step or list)" if ranged else ""))
    p.add_argument("--N", type=positive_int, required=True, help="ambient dimension")
    p.add_argument("--r", type=positive_int, default=1, help="hybrid order")
    p.add_argument("--T", type=float, default=100.0, help="hybrid bias amplitude")
    p.add_argument("--legacy-ones", action="store_true", help="hybrid bias along the all-ones vector (r=1)")


def _common_flags(p, out_required=False):
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--out", required=out_required, help="output file (stdout when omitted)")
    p.add_argument("--format", choices=["csv", "jsonl"], default="csv", help="table format")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ols-cs", description="Greedy sparse recovery toolkit.",
                                     epilog=NUMERICS_NOTE)
    sub = parser.add_subparsers(dest="command", required=True)

    p = _sub(sub, "gen-dict", "generate a dictionary and save it as CSV plus a .meta sidecar")
    _dict_flags(p, ranged=False)
    p.add_argument("--seed", type=int, default=0, help="dictionary seed")
    p.add_argument("--out", required=True, help="CSV path")

    p = _sub(sub, "solve", "recover one planted sparse signal")
    _dict_flags(p, ranged=False)
    p.add_argument("--K", type=positive_int, required=True, help="sparsity")
    p.add_argument("--algo", choices=ALGORITHMS, default="ols", help="solver")
    p.add_argument("--dict-file", help="load the dictionary from CSV instead of generating it")
    p.add_argument("--value-model", choices=["gaussian", "unit"], default="gaussian")
    p.add_argument("--tol", type=float, default=None, help="absolute stopping tolerance")
    p.add_argument("--alpha", type=float, default=None, help="warm-start scale (default ||y||)")
    p.add_argument("--trace", help="write a JSON-lines per-iteration trace here")
    p.add_argument("--seed", type=int, default=0, help="instance seed")
    p.add_argument("--out", help="write the summary here (stdout when omitted)")

    for name, text in (("sweep", "recovery rate versus M"),
                       ("conditional", "per-iteration conditional success P(S_i | S_i-1)")):
        p = _sub(sub, name, text)
        _dict_flags(p, ranged=True)
        p.add_argument("--K", type=int_range, required=True, help="sparsity (range or list)")
        p.add_argument("--algo", type=algo_list, default=["ols"], help="comma list of solvers")
        p.add_argument("--trials", type=positive_int, default=1000)
        p.add_argument("--jobs", type=positive_int, default=1, help="worker processes; output is identical for any value")
        p.add_argument("--value-model", choices=["gaussian", "unit"], default="gaussian")
        if name == "sweep":
            p.add_argument("--timing", action="store_true", help="add wall-time columns (not reproducible)")
        _common_flags(p)

    p = _sub(sub, "mstar", "smallest M reaching a target success rate, per K")
    _dict_flags(p, ranged=True)
    p.add_argument("--K", type=int_range, required=True, help="sparsity values")
    p.add_argument("--algo", choices=ALGORITHMS, default="ols")
    p.add_argument("--target", type=probability, default=0.95)
    p.add_argument("--trials", type=positive_int, default=1000)
    p.add_argument("--jobs", type=positive_int, default=1)
    p.add_argument("--value-model", choices=["gaussian", "unit"], default="gaussian")
    _common_flags(p)

    p = _sub(sub, "scaling", "median solver time while one of K, M, N varies")
    p.add_argument("--vary", choices=["K", "M", "N"], required=True)
    p.add_argument("--values", type=int_range, required=True)
    p.add_argument("--M", type=positive_int, default=200)
    p.add_argument("--N", type=positive_int, default=2000)
    p.add_argument("--K", type=positive_int, default=10)
    p.add_argument("--algo", choices=ALGORITHMS, default="ols")
    p.add_argument("--repeats", type=positive_int, default=21, help="timed runs per point (>= 21)")
    p.add_argument("--warmup", type=int, default=2)
    _common_flags(p)

    p = _sub(sub, "theory", "bound tables over an M grid")
    p.add_argument("--M", type=int_range, required=True)
    p.add_argument("--N", type=positive_int, required=True)
    p.add_argument("--K", type=positive_int, required=True)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--c1", type=float, default=1.0)
    p.add_argument("--r", type=positive_int, default=1)
    p.add_argument("--T", type=float, default=100.0)
    p.add_argument("--tail", choices=th.TAILS, default="two_sided", help="Gaussian tail form inside p(delta)")
    _common_flags(p)

    p = _sub(sub, "decorr", "decorrelation schedule T_k and OMP first-iteration success")
    p.add_argument("--M", type=positive_int, required=True)
    p.add_argument("--N", type=positive_int, default=256)
    p.add_argument("--K", type=positive_int, default=12)
    p.add_argument("--T", type=float, default=100.0)
    p.add_argument("--target", type=probability, default=0.99)
    p.add_argument("--tail", choices=th.TAILS, default="doubled")
    p.add_argument("--strict", action="store_true", help="fail when the target becomes unreachable")
    p.add_argument("--trials", type=int, default=0, help="OMP first-iteration trials per T_k (0 skips)")
    _common_flags(p)
    parser.subcommands = sub
    return parser


# --- output helpers -------------------------------------------------------


def _coerce(value: str):
    if value == "":
        return None
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    return value


def csv_to_jsonl(text: str) -> str:
    rows = csv.DictReader(io.StringIO(text))
    return "".join(json.dumps({k: _coerce(v) for k, v in r.items()}) + "\n" for r in rows)


def _emit(text: str, args, table: bool = True) -> None:
    if table and getattr(args, "format", "csv") == "jsonl":
        text = csv_to_jsonl(text)
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)


def _manifest(args, config) -> None:
    if args.out:
        atomic_write_text(args.out + ".manifest", ex.run_manifest(config, command=args.command,
                                                                  extra={"seed": args.seed}))


def _config(args, **extra) -> ex.ExperimentConfig:
    return ex.ExperimentConfig(kind=args.dict, M_values=args.M, N=args.N, K_values=args.K, r=args.r,
                               T=args.T, legacy_ones=args.legacy_ones, trials=args.trials,
                               master_seed=args.seed, value_model=args.value_model,
                               jobs=args.jobs, **extra)


def _validate(parser, args) -> None:
    """Cross-flag checks, all before any computation."""
    sub = parser.subcommands.choices[args.command]
    if args.command in ("sweep", "conditional", "mstar"):
        if max(args.M) > args.N:
            sub.error(f"--M: every value must be <= --N ({args.N})")
        if max(args.K) >= args.N:
            sub.error(f"--K: every value must be < --N ({args.N})")
    if args.command in ("gen-dict", "solve", "sweep", "conditional", "mstar"):
        if args.dict == "hybrid" and not args.T > 0:
            sub.error("--T must be positive")
        if args.legacy_ones and args.r != 1:
            sub.error("--legacy-ones requires --r 1")
    if args.command == "solve" and args.K >= args.N:
        sub.error("--K must be < --N")
    if args.command == "scaling" and args.repeats < 21:
        sub.error("--repeats must be >= 21")
    if args.command == "theory":
        if min(args.M) - args.K - 1 < 1:
            sub.error("--M: every value must exceed K + 1")
        if not 0 < args.delta < 1:
            sub.error("--delta must lie in (0, 1)")
    if args.command == "decorr" and not args.T > 0:
        sub.error("--T must be positive")


# --- commands -------------------------------------------------------------


def cmd_gen_dict(args) -> None:
    d = make_dictionary(args.dict, args.M, args.N, args.seed, r=args.r, T=args.T, legacy_ones=args.legacy_ones)
    save_dictionary(d, args.out)


def cmd_solve(args) -> None:
    if args.dict_file:
        d = load_dictionary(args.dict_file)
    else:
        d = make_dictionary(args.dict, args.M, args.N, args.seed, r=args.r, T=args.T,
                            legacy_ones=args.legacy_ones)
    signal = random_sparse_signal(d.n_columns, args.K, args.seed, args.value_model)
    y = measure(d, signal)
    truth = sorted(int(s) for s in signal.support)
    res = solve(args.algo, d, y, args.K, truth=truth, tolerance=args.tol, warm_alpha=args.alpha,
                dummy_seed=args.seed)
    lines = [
        f"algorithm={args.algo}",
        f"true_support={' '.join(map(str, truth))}",
        f"selected={' '.join(map(str, res.selected))}",
        f"support={' '.join(map(str, res.pruned_support))}",
        f"residual_norms={' '.join(repr(r) for r in res.residual_norms)}",
        f"exact_recovery={str(res.exact_recovery).lower()}",
    ]
    if args.trace:
        buf = io.StringIO()
        res.write_trace(buf)
        atomic_write_text(args.trace, buf.getvalue())
    _emit("\n".join(lines) + "\n", args, table=False)


def cmd_sweep(args) -> None:
    config = _config(args, algorithms=args.algo)
    table = ex.recovery_sweep(config)
    _emit(table.to_csv(include_timing=args.timing), args)
    _manifest(args, config)


def cmd_conditional(args) -> None:
    config = _config(args, algorithms=args.algo)
    _emit(ex.conditional_success(config).to_csv(), args)
    _manifest(args, config)


def cmd_mstar(args) -> None:
    config = _config(args, algorithms=[args.algo], target=args.target)
    rows = ex.measurements_for_target(config, M_grid=args.M, algorithm=args.algo)
    if len(rows) >= 2:
        fit = ex.fit_mstar(rows, args.N)
        print(f"fit slope={fit.slope:.6g} intercept={fit.intercept:.6g} r2={fit.r_squared:.6g}", file=sys.stderr)
    _emit(ex.mstar_csv(rows, args.N), args)
    _manifest(args, config)


def cmd_scaling(args) -> None:
    rows = ex.runtime_scaling(args.vary, args.values, M=args.M, N=args.N, K=args.K, algorithm=args.algo,
                              repeats=args.repeats, warmup=args.warmup, seed=args.seed)
    if len(rows) >= 2:
        print(f"log-log slope={ex.loglog_slope(rows):.4f}", file=sys.stderr)
    _emit(ex.timing_csv(rows), args)


THEORY_COLUMNS = ["M", "N", "K", "delta", "M1", "epsilon1", "epsilon2", "sigma", "bound_raw", "bound",
                  "product_form", "r", "T", "tail", "delta1", "sigma_star", "g_star", "p_delta_raw",
                  "p_delta", "kappa", "coherence_level", "coherence_probability"]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def cmd_theory(args) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(THEORY_COLUMNS)
    for M in args.M:
        bp = th.BoundParams(M, args.N, args.K, args.delta, c1=args.c1)
        rb = th.recovery_probability_lower_bound(bp)
        pdr = th.p_delta_details(th.HybridBoundParams(M, args.r, args.T, args.delta), args.tail)
        coh = None
        if args.delta < th.DELTA_EXCLUSIVE:
            coh = th.coherence_probability_bound(args.K, args.r, args.delta, min(pdr.value, 1.0 / args.r))
        row = [M, args.N, args.K, args.delta, bp.M1, bp.epsilon1, bp.epsilon2, rb.sigma,
               rb.raw if math.isfinite(rb.raw) else None, rb.value, rb.product_form, args.r, args.T,
               args.tail, pdr.delta1, pdr.sigma_star, pdr.g_star, pdr.raw, pdr.value,
               th.kappa(args.delta), th.coherence_level(args.delta), coh]
        writer.writerow([_fmt(v) for v in row])
    _emit(buf.getvalue(), args)


def cmd_decorr(args) -> None:
    rows = ex.decorrelation_schedule(args.M, args.T, args.K, target=args.target, tail=args.tail,
                                     strict=args.strict)
    text = ex.schedule_csv(rows)
    if args.trials > 0:
        first = ex.omp_first_iteration_success(rows, args.M, args.N, args.K, trials=args.trials,
                                               master_seed=args.seed)
        text = ex.first_iteration_csv(first)
    _emit(text, args)


COMMANDS = {
    "gen-dict": cmd_gen_dict,
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "conditional": cmd_conditional,
    "mstar": cmd_mstar,
    "scaling": cmd_scaling,
    "theory": cmd_theory,
    "decorr": cmd_decorr,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        env_seed = os.environ.get(SEED_ENV)
        if env_seed is not None and hasattr(args, "seed"):
            try:
                args.seed = int(env_seed)
            except ValueError:
                parser.error(f"{SEED_ENV} must be an integer, got {env_seed!r}")
        _validate(parser, args)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        COMMANDS[args.command](args)
    except (OLSCSError, OSError, ValueError, ArithmeticError) as exc:
        print(f"ols-cs {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
