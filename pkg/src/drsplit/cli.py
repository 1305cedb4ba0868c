"""Command line entry point.

Subcommands: solve one instance, bench a batch of seeded runs, fit the
empirical convergence rate (or report finite termination), and inspect
the subspace angles and spectrum behind the predicted rates.

Exit codes: 0 success / feasible, 1 usage or input error, 2 solver did
not reach feasibility or the data could not support a rate fit.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .analysis import (
    SUDOKU_SDR_RATE,
    InsufficientDataError,
    auto_tail_fraction,
    build_sudoku_linearization,
    ddr_rate_block,
    ddr_rate_eigenvalues,
    detect_finite_termination,
    fit_linear_rate,
    friedrichs_angle,
    is_semi_simple,
    numerical_rank,
    principal_angles,
    sudoku_subspace_bases,
    theoretical_rate,
)
from .bench import bench_puzzle
from .plotting import render_rate_plot
from .puzzles import (
    InvalidInstanceError,
    ParseError,
    QueensInstance,
    SudokuInstance,
    bundled_path,
    bundled_sudoku,
    circle_line_instance,
    format_grid,
    parse_sudoku,
    queens_problem,
    sudoku_problem,
)
from .splitting import (
    FEASIBLE,
    METHODS,
    StopPolicy,
    product_step,
    read_trace_csv,
    run,
    two_set_step,
)

__all__ = ["CliError", "main"]

_BUNDLED_KEYS = ("4x4", "9x9-37", "9x9-22")

_DENSE_EIG_LIMIT = 600      # full spectra only for small product spaces
_RANK_BLOCK_LIMIT = 48      # the rate block is p-independent, test a slice


class CliError(Exception):
    """Usage-level problem; reported on stderr with exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


# ---------------------------------------------------------------------------
# argument plumbing

def _add_instance_flags(sp, circle=False):
    sp.add_argument("--puzzle", metavar="KEY_OR_FILE",
                    help="bundled instance key (4x4, 9x9-37, 9x9-22) "
                         "or a puzzle text file")
    sp.add_argument("--queens-size", type=int, dest="queens_size",
                    metavar="S", help="s-queens board side")
    if circle:
        sp.add_argument("--circle-line", action="store_true",
                        dest="circle_line",
                        help="the bundled 2-D circle/line pair")


def _add_solver_flags(sp):
    sp.add_argument("--method", choices=list(METHODS), default=None)
    sp.add_argument("--gamma", type=float, default=None,
                    help="damping parameter for ddr; inf recovers sdr")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--max-iter", type=int, dest="max_iter", default=None)
    sp.add_argument("--min-iter", type=int, dest="min_iter", default=None)
    sp.add_argument("--tol", type=float, default=None,
                    help="z-step stall tolerance")
    sp.add_argument("--tie-break", choices=["lowest", "random"],
                    dest="tie_break", default=None)


def _build_parser():
    parser = _Parser(prog="drsplit",
                     description="feasibility solving by projection "
                                 "splitting, with rate analysis")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="run one instance from one seed")
    _add_instance_flags(sp, circle=True)
    _add_solver_flags(sp)
    sp.add_argument("--run-to-stall", action="store_true",
                    dest="run_to_stall",
                    help="ignore feasibility, iterate until the z step "
                         "stalls or max-iter")
    sp.add_argument("--config", metavar="FILE",
                    help="key=value defaults; explicit flags win")
    sp.add_argument("--out", metavar="FILE",
                    help="write the rounded solution")
    sp.add_argument("--trace", metavar="FILE",
                    help="write the per-iteration trace CSV")
    sp.set_defaults(func=_cmd_solve)

    sp = sub.add_parser("bench", help="batch of seeded runs")
    _add_instance_flags(sp)
    _add_solver_flags(sp)
    sp.add_argument("--runs", type=int, default=None)
    sp.add_argument("--workers", type=int, default=None)
    sp.add_argument("--config", metavar="FILE")
    sp.add_argument("--out", metavar="FILE", help="write per-run CSV")
    sp.set_defaults(func=_cmd_bench)

    sp = sub.add_parser("rates", help="fit the local linear rate of a run")
    _add_instance_flags(sp, circle=True)
    _add_solver_flags(sp)
    sp.add_argument("--trace", metavar="FILE",
                    help="fit a previously written trace CSV instead of "
                         "running")
    sp.add_argument("--quantity", default=None,
                    choices=["z_res", "x_res", "objective"])
    sp.add_argument("--tail-fraction", dest="tail_fraction", default=None,
                    help="fraction of the run to fit, or 'auto'")
    sp.add_argument("--out", metavar="FILE", help="write an SVG plot")
    sp.add_argument("--report", metavar="FILE", help="write a JSON report")
    sp.set_defaults(func=_cmd_rates)

    sp = sub.add_parser("angles",
                        help="subspace angles and the damped-map spectrum")
    sp.add_argument("--puzzle", metavar="KEY_OR_FILE", required=True)
    sp.add_argument("--gamma", type=float, default=0.2)
    sp.add_argument("--dim-cap", type=int, dest="dim_cap", default=2000,
                    help="largest product dimension to build densely")
    sp.set_defaults(func=_cmd_angles)

    return parser


_CONFIG_TYPES = {
    "method": str,
    "gamma": float,
    "seed": int,
    "max_iter": int,
    "min_iter": int,
    "tol": float,
    "tie_break": str,
    "puzzle": str,
    "queens_size": int,
    "runs": int,
    "workers": int,
    "quantity": str,
    "tail_fraction": str,
}


def _apply_config(args):
    """Fill parse results from a key=value file; flags keep priority
    because only still-unset (None) values are overwritten."""
    path = Path(args.config)
    if not path.exists():
        raise CliError(f"config file {args.config!r} not found")
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(
                f"{args.config}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CONFIG_TYPES or not hasattr(args, key):
            raise CliError(f"{args.config}:{lineno}: unknown key {key!r}")
        if getattr(args, key) is None:
            try:
                setattr(args, key, _CONFIG_TYPES[key](value))
            except ValueError:
                raise CliError(
                    f"{args.config}:{lineno}: bad value {value!r} "
                    f"for {key}") from None


# ---------------------------------------------------------------------------
# shared resolution helpers

def _resolve_instance(args):
    """(kind, instance) from the mutually exclusive instance flags."""
    chosen = []
    if args.puzzle is not None:
        chosen.append("--puzzle")
    if getattr(args, "queens_size", None) is not None:
        chosen.append("--queens-size")
    if getattr(args, "circle_line", False):
        chosen.append("--circle-line")
    if len(chosen) > 1:
        raise CliError(f"choose one instance, got {' and '.join(chosen)}")
    if args.puzzle is not None:
        if args.puzzle in _BUNDLED_KEYS:
            return "sudoku", bundled_sudoku(args.puzzle)
        path = Path(args.puzzle)
        if not path.exists():
            raise CliError(
                f"{args.puzzle!r} is neither a bundled key "
                f"{_BUNDLED_KEYS} nor an existing file")
        return "sudoku", parse_sudoku(path.read_text())
    if getattr(args, "queens_size", None) is not None:
        return "queens", QueensInstance(args.queens_size)
    if getattr(args, "circle_line", False):
        return "circle-line", circle_line_instance()
    raise CliError("an instance is required: --puzzle, --queens-size"
                   + (" or --circle-line" if hasattr(args, "circle_line")
                      else ""))


def _resolve_method(args):
    method = args.method if args.method is not None else "sdr"
    if method not in METHODS:
        raise CliError(f"unknown method {method!r}; choose from {METHODS}")
    if method == "ddr" and args.gamma is None:
        raise CliError("--gamma is required for the damped method (ddr)")
    return method


def _resolve_policy(args, stop_on_feasible=True):
    return StopPolicy(
        max_iter=10_000 if args.max_iter is None else args.max_iter,
        min_iter=100 if args.min_iter is None else args.min_iter,
        z_step_tol=1e-12 if args.tol is None else args.tol,
        stop_on_feasible=stop_on_feasible)


def _resolve_seed(args):
    return 0 if args.seed is None else args.seed


def _build_problem(kind, inst, args):
    tie_break = args.tie_break if args.tie_break is not None else "lowest"
    tie_seed = _resolve_seed(args) if tie_break == "random" else None
    build = sudoku_problem if kind == "sudoku" else queens_problem
    return build(inst, tie_break=tie_break, tie_seed=tie_seed)


def _run_instance(kind, inst, args, stop_on_feasible=True,
                  keep_iterates=False):
    method = _resolve_method(args)
    if kind == "circle-line":
        # continuous sets: the tracked point can drift through near-feasible
        # positions without the iteration converging, so stop on the z-step
        # stall and classify feasibility there
        policy = _resolve_policy(args, stop_on_feasible=False)
        step = two_set_step(inst.line.project, inst.project_circle,
                            method, gamma=args.gamma)
        res = run(step, inst.z0, policy, feasible=inst.feasible,
                  keep_iterates=keep_iterates)
        return res, None
    policy = _resolve_policy(args, stop_on_feasible=stop_on_feasible)
    problem = _build_problem(kind, inst, args)
    step = product_step(problem.projections, method, gamma=args.gamma)
    res = run(step, problem.initial_state(_resolve_seed(args)), policy,
              feasible=problem.feasible, keep_iterates=keep_iterates)
    return res, problem


# ---------------------------------------------------------------------------
# subcommands

def _cmd_solve(args):
    kind, inst = _resolve_instance(args)
    keep = args.trace is not None
    res, problem = _run_instance(
        kind, inst, args, stop_on_feasible=not args.run_to_stall,
        keep_iterates=keep)
    print(f"outcome={res.outcome} iterations={res.iterations} "
          f"final_z_step={res.trace.z_step[-1]:.3e}")
    if args.out:
        if kind == "sudoku":
            grid = problem.round(res.candidate)
            Path(args.out).write_text(format_grid(grid))
        elif kind == "queens":
            board = problem.round(res.candidate)
            text = "\n".join(" ".join(str(int(v)) for v in row)
                             for row in board) + "\n"
            Path(args.out).write_text(text)
        else:
            Path(args.out).write_text(
                " ".join(repr(float(v)) for v in res.x) + "\n")
        print(f"solution written to {args.out}")
    if args.trace:
        if res.trace.has_snapshots:
            res.trace.set_reference()
        res.trace.to_csv(args.trace)
        print(f"trace written to {args.trace}")
    return 0 if res.outcome == FEASIBLE else 2


def _cmd_bench(args):
    kind, inst = _resolve_instance(args)
    if kind == "circle-line":
        raise CliError("bench needs a puzzle instance")
    method = _resolve_method(args)
    policy = _resolve_policy(args)
    runs = 20 if args.runs is None else args.runs
    report = bench_puzzle(inst, method, args.gamma, policy, runs=runs,
                          base_seed=_resolve_seed(args),
                          workers=args.workers)
    print(f"instance={args.puzzle or f'queens-{inst.size}'} "
          f"method={method}"
          + (f" gamma={args.gamma}" if method == "ddr" else ""))
    print(report.summary())
    if args.out:
        report.to_csv(args.out)
        print(f"records written to {args.out}")
    return 0


def _fit_quantity(args):
    return args.quantity if args.quantity is not None else "z_res"


def _fit_tail(args, trace, quantity):
    raw = args.tail_fraction
    if raw is None or raw == "auto":
        return auto_tail_fraction(trace, quantity)
    return float(raw)


def _cmd_rates(args):
    quantity = _fit_quantity(args)
    theory = None
    trace = None
    if args.trace is not None:
        trace = read_trace_csv(args.trace)
    else:
        kind, inst = _resolve_instance(args)
        method = _resolve_method(args)
        res, _ = _run_instance(kind, inst, args, stop_on_feasible=False,
                               keep_iterates=True)
        res.trace.set_reference()
        trace = res.trace
        print(f"outcome={res.outcome} iterations={res.iterations}")
        if kind == "queens":
            freeze_z = detect_finite_termination(trace, "z")
            blocks = [f"z K={freeze_z if freeze_z is not None else 'none'}"]
            for i in range(trace.n_blocks):
                k_u = detect_finite_termination(trace, f"u{i}")
                blocks.append(f"u{i} K={k_u if k_u is not None else 'none'}")
            print("finite termination: " + ", ".join(blocks))
            if args.out:
                ks = np.arange(1, len(trace) + 1)
                render_rate_plot(args.out,
                                 [("z step", ks, trace.z_step)],
                                 title="finite termination")
                print(f"plot written to {args.out}")
            return 0
        theory = theoretical_rate(kind, method, args.gamma)

    tail = _fit_tail(args, trace, quantity)
    est = fit_linear_rate(trace, quantity, tail)
    line = (f"quantity={quantity} slope={est.slope:.6f} "
            f"r_squared={est.r_squared:.6f} "
            f"window={est.window[0]}..{est.window[1]} "
            f"n_points={est.n_points}")
    if theory is not None:
        line += f" theory={theory:.6f} deviation={est.slope - theory:+.6f}"
    print(line)

    if args.out:
        ks = np.arange(1, len(trace) + 1)
        values = trace.residuals(quantity)
        guide = None
        if theory is not None:
            guide = (theory, f"theory {theory:.4f}")
        render_rate_plot(args.out, [(quantity, ks, values)], guide=guide,
                         title=f"residual decay ({quantity})")
        print(f"plot written to {args.out}")
    if args.report:
        record = {
            "quantity": quantity,
            "slope": est.slope,
            "r_squared": est.r_squared,
            "window": [est.window[0], est.window[1]],
            "n_points": est.n_points,
            "tail_fraction": tail,
            "theory": theory,
        }
        if theory is not None:
            record["deviation"] = est.slope - theory
        Path(args.report).write_text(json.dumps(record, indent=2) + "\n")
        print(f"report written to {args.report}")
    return 0


def _cmd_angles(args):
    if args.puzzle in _BUNDLED_KEYS:
        inst = bundled_sudoku(args.puzzle)
    else:
        path = Path(args.puzzle)
        if not path.exists():
            raise CliError(
                f"{args.puzzle!r} is neither a bundled key "
                f"{_BUNDLED_KEYS} nor an existing file")
        inst = parse_sudoku(path.read_text())
    if not isinstance(inst, SudokuInstance):
        raise CliError("angles needs a sudoku instance")
    n = inst.size ** 3
    dim = 5 * n
    if dim > args.dim_cap:
        raise CliError(
            f"product dimension {dim} exceeds the cap {args.dim_cap}; "
            f"pass --dim-cap {dim} or more to proceed")

    basis_c, basis_s = sudoku_subspace_bases(inst)
    p = basis_c.shape[0]
    cos_f = float(np.cos(friedrichs_angle(basis_c, basis_s)))
    cosines = np.cos(principal_angles(basis_c, basis_s))
    print(f"instance={args.puzzle} ambient_dim={dim} blocks=5 "
          f"free_coordinates={p}")
    print(f"cos_friedrichs={cos_f!r} "
          f"deviation_from_theory={abs(cos_f - SUDOKU_SDR_RATE):.3e}")
    print(f"principal_cosines: count={len(cosines)} "
          f"max_deviation={float(np.max(np.abs(cosines - SUDOKU_SDR_RATE))):.3e}")

    gamma = args.gamma
    lam = ddr_rate_eigenvalues(gamma)
    mults = (n - p, p, 4 * n - p, p)
    print(f"gamma={gamma} eigenvalues: "
          f"0 x{mults[0]}, {lam[1]:.12f} x{mults[1]}, "
          f"{lam[2]:.12f} x{mults[2]}, {lam[3]:.12f} x{mults[3]}")
    if dim <= _DENSE_EIG_LIMIT:
        m = build_sudoku_linearization(inst, gamma=gamma,
                                       dim_cap=args.dim_cap)
        ev = np.linalg.eigvals(m)
        targets = np.asarray(lam)
        dist = np.min(np.abs(ev[:, None] - targets[None, :]), axis=1)
        print(f"eigenvalue check (dense): max_deviation="
              f"{float(np.max(dist)):.3e}")
    else:
        print("eigenvalue check (dense): skipped above dimension "
              f"{_DENSE_EIG_LIMIT}, closed form reported")

    p_test = min(p, _RANK_BLOCK_LIMIT)
    block = ddr_rate_block(gamma, p_test)
    shifted = block - lam[3] * np.eye(2 * p_test)
    rank_1 = numerical_rank(shifted, reference=block)
    rank_2 = numerical_rank(shifted @ shifted, reference=block)
    print(f"dominant_rate={lam[3]!r} "
          f"semi_simple={is_semi_simple(block, lam[3])} "
          f"rank={rank_1} rank_of_square={rank_2} block_p={p_test}")
    return 0


# ---------------------------------------------------------------------------

def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "config", None):
            _apply_config(args)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except InsufficientDataError as exc:
        print(f"error: insufficient data for a rate fit: {exc}",
              file=sys.stderr)
        return 2
    except (ParseError, InvalidInstanceError, KeyError, OSError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
