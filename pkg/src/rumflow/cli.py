"""Command-line interface: projection, gradient check, hypothesis test, benchmarks.

Every flag can also be supplied through an environment variable named
RUMFLOW_<FLAG> (dashes become underscores); explicit flags win. All commands
take --seed and are bit-reproducible given it.

Exit codes: 0 success, 1 input error, 2 non-convergence or failed tolerance,
3 degenerate instance.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import operators as ops
from .adjoint import run_gradcheck
from .bench import (
    DEFAULT_SPARSITY_SWEEP,
    BenchReport,
    frozen_barrier_run,
    orders_of_reduction,
    stress_test_run,
)
from .inference import InferenceError, ReplicationError, TestConfig, bootstrap_test
from .ipm import IpmOptions
from .lattice import LatticeError, build_indexer
from .projection import project
from .vectorfile import (
    VectorFileError,
    format_record,
    read_mask,
    read_vector,
    render_rank_scatter_svg,
    render_residual_curves_svg,
    write_vector,
)

ENV_PREFIX = "RUMFLOW_"
DESK_SCALE_LIMIT = 12

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NOCONV = 2
EXIT_DEGENERATE = 3


def _env_default(flag: str, fallback):
    raw = os.environ.get(ENV_PREFIX + flag.upper().replace("-", "_"))
    if raw is None:
        return fallback
    if fallback is None:
        return raw
    if isinstance(fallback, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    return type(fallback)(raw)


def _add(parser: argparse.ArgumentParser, flag: str, default, **kw):
    if isinstance(default, bool):
        parser.add_argument(
            f"--{flag}",
            action="store_true",
            default=_env_default(flag, default),
            **kw,
        )
    else:
        kw.setdefault("type", type(default) if default is not None else str)
        parser.add_argument(f"--{flag}", default=_env_default(flag, default), **kw)


def _ipm_options(args) -> IpmOptions:
    return IpmOptions(
        tau=args.tau,
        mu_tol=args.mu_tol,
        residual_tol=args.residual_tol,
        max_iter=args.max_iter,
        rebuild_log10_threshold=args.rebuild_log10,
        rebuild_cg_iter_threshold=args.rebuild_cg_iters,
    )


def _add_ipm_flags(p: argparse.ArgumentParser):
    _add(p, "tau", 0.995, help="fraction-to-boundary parameter")
    _add(p, "mu-tol", 1e-9, help="duality measure tolerance")
    _add(p, "residual-tol", 1e-8, help="KKT residual tolerance")
    _add(p, "max-iter", 100, help="outer iteration cap")
    _add(p, "rebuild-log10", 1.0, help="barrier log10 drift that forces a tree rebuild")
    _add(p, "rebuild-cg-iters", 200, help="inner iteration count that forces a rebuild")


def _out_stream(path: str | None):
    return open(path, "w") if path else sys.stdout


def cmd_project(args) -> int:
    try:
        indexer, values, observed = read_vector(args.input)
    except (VectorFileError, LatticeError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    try:
        if args.mask:
            observed = read_mask(args.mask, indexer)
        mask = ops.ObservationMask(indexer, observed) if observed is not None else ops.full_mask(indexer)
        result = project(indexer, values, mask, _ipm_options(args))
    except (VectorFileError, ops.OperatorError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT

    record = format_record(
        "projection",
        {
            "n": indexer.n,
            "converged": result.converged,
            "distance_sq": result.distance_sq,
            "min_bm_value": result.min_bm_value,
            "max_row_sum_error": result.max_row_sum_error,
            "ipm_iterations": result.ipm_iterations,
            "cg_iterations": result.total_cg_iterations,
            "mu": result.mu,
            "rho_star": result.rho_star,
        },
    )
    out = _out_stream(args.output)
    try:
        print(record, file=out)
    finally:
        if out is not sys.stdout:
            out.close()
    if args.output_vector:
        write_vector(args.output_vector, indexer, result.rho_star, hex_floats=args.hex)
    return EXIT_OK if result.converged else EXIT_NOCONV


def cmd_gradcheck(args) -> int:
    if args.n > 6:
        print("error: gradcheck supports n <= 6", file=sys.stderr)
        return EXIT_INPUT
    try:
        indexer = build_indexer(args.n)
    except LatticeError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    coords = args.coords if args.coords > 0 else None
    report = run_gradcheck(
        indexer, seed=args.seed, step=args.step, num_coords=coords
    )
    if report.degenerate:
        print(
            f"degenerate: strict complementarity guard tripped on "
            f"{report.resamples} resamples",
            file=sys.stderr,
        )
        return EXIT_DEGENERATE
    print(
        format_record(
            "gradcheck",
            {
                "n": args.n,
                "seed": args.seed,
                "max_rel_error": report.max_rel_error,
                "coords": len(report.checked_coords),
                "resamples": report.resamples,
            },
        )
    )
    return EXIT_OK if report.max_rel_error < args.tolerance else EXIT_NOCONV


def cmd_hypo_test(args) -> int:
    try:
        indexer, values, observed = read_vector(args.input)
        if observed is not None:
            print("error: hypothesis test expects a full-mask vector", file=sys.stderr)
            return EXIT_INPUT
        cfg = TestConfig(
            sample_size=args.sample_size,
            replications=args.replications,
            alpha=args.alpha,
            tighten_c=args.tighten_c,
            tighten_a=args.tighten_a,
            seed=args.seed,
        )
        report = bootstrap_test(indexer, values, cfg, _ipm_options(args))
    except (VectorFileError, InferenceError, ops.OperatorError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except ReplicationError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NOCONV

    record = format_record(
        "hypo_test",
        {
            "n": indexer.n,
            "J_N": report.J_N,
            "p_value": report.p_value,
            "reject": report.reject,
            "excluded": report.excluded,
            "replications": args.replications,
            "alpha": args.alpha,
            "seed": args.seed,
        },
    )
    out = _out_stream(args.output)
    try:
        print(record, file=out)
        if out is not sys.stdout:
            for j in report.bootstrap_stats:
                print(format_record("bootstrap_stat", {"value": float(j)}), file=out)
    finally:
        if out is not sys.stdout:
            out.close()
    print("reject" if report.reject else "do not reject")
    return EXIT_OK


def _check_bench_scale(args) -> bool:
    if args.n > DESK_SCALE_LIMIT and not args.large:
        print(
            f"error: n={args.n} exceeds the desk-scale cap {DESK_SCALE_LIMIT}; "
            "pass --large to lift it",
            file=sys.stderr,
        )
        return False
    return True


def _emit_bench(report: BenchReport, args, scatter: bool) -> None:
    out = _out_stream(args.output)
    try:
        summary = {
            "scenario": report.scenario,
            "n": report.n,
            "seed": report.seed,
        }
        if report.slope is not None:
            summary.update(
                slope=report.slope,
                intercept=report.intercept,
                correlation=report.correlation,
            )
        print(format_record("bench_summary", summary), file=out)
        for rec in report.records:
            fields = {
                "label": rec.label,
                "iterations": rec.iterations,
                "converged": rec.converged,
                "wall_time": rec.wall_time,
                "orders_at_25": orders_of_reduction(rec.residual_history, 25),
                "orders_total": orders_of_reduction(rec.residual_history),
            }
            if rec.effective_rank is not None:
                fields["effective_rank"] = rec.effective_rank
            fields["residual_history"] = rec.residual_history
            print(format_record("bench_point", fields), file=out)
        # plain-text summary table
        print(f"# {report.scenario} n={report.n} seed={report.seed}", file=out)
        for rec in report.records:
            rank = "" if rec.effective_rank is None else f" r={rec.effective_rank:>6d}"
            print(
                f"# {rec.label:>10s}{rank} iterations={rec.iterations:>5d} "
                f"converged={int(rec.converged)}",
                file=out,
            )
    finally:
        if out is not sys.stdout:
            out.close()
    if args.plot:
        if scatter:
            svg = render_rank_scatter_svg(
                [r.effective_rank for r in report.records],
                [r.iterations for r in report.records],
            )
        else:
            svg = render_residual_curves_svg(
                {r.label: r.residual_history for r in report.records}
            )
        with open(args.plot, "w") as fh:
            fh.write(svg)


def cmd_bench_frozen(args) -> int:
    if not _check_bench_scale(args):
        return EXIT_INPUT
    try:
        sweep = tuple(float(tok) for tok in args.sparsity.split(","))
    except ValueError:
        print(f"error: bad sparsity list {args.sparsity!r}", file=sys.stderr)
        return EXIT_INPUT
    report = frozen_barrier_run(args.n, sweep, seed=args.seed, rel_tol=args.rel_tol)
    _emit_bench(report, args, scatter=True)
    return EXIT_OK if all(r.converged for r in report.records) else EXIT_NOCONV


def cmd_bench_stress(args) -> int:
    if not _check_bench_scale(args):
        return EXIT_INPUT
    report = stress_test_run(args.n, seed=args.seed, max_iter=args.cg_iters)
    _emit_bench(report, args, scatter=False)
    tree = next(r for r in report.records if r.label == "tree")
    return EXIT_OK if tree.converged else EXIT_NOCONV


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rumflow",
        description="Projection onto the random-utility polytope: solver, "
        "gradients, hypothesis test, benchmarks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("project", help="project a choice vector onto the polytope")
    _add(p, "input", None, help="vector file to project")
    _add(p, "mask", None, help="optional mask file (one hex subset per line)")
    _add(p, "output", None, help="record output path (default stdout)")
    _add(p, "output-vector", None, help="also write the projected vector here")
    _add(p, "hex", False, help="hex-float serialization for the output vector")
    _add_ipm_flags(p)
    p.set_defaults(fn=cmd_project)

    p = sub.add_parser("gradcheck", help="adjoint gradient vs finite differences")
    _add(p, "n", 4, help="alternative count (<= 6)")
    _add(p, "seed", 0, help="instance seed")
    _add(p, "tolerance", 1e-4, help="max relative error allowed")
    _add(p, "step", 1e-5, help="finite-difference step")
    _add(p, "coords", 0, help="coordinate subset size (0 = all)")
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("hypo-test", help="bootstrap consistency test")
    _add(p, "input", None, help="row-normalized frequency vector file")
    _add(p, "sample-size", 500, help="observations behind the frequencies")
    _add(p, "replications", 200, help="bootstrap replications")
    _add(p, "alpha", 0.05, help="significance level")
    _add(p, "seed", 0, help="bootstrap seed")
    _add(p, "tighten-c", 0.1, help="tightening constant c")
    _add(p, "tighten-a", 0.25, help="tightening exponent a in (0, 1/2)")
    _add(p, "output", None, help="record output path (default stdout)")
    _add_ipm_flags(p)
    p.set_defaults(fn=cmd_hypo_test)

    p = sub.add_parser("bench-frozen", help="frozen-barrier rank sweep")
    _add(p, "n", 8, help="alternative count")
    _add(p, "seed", 0, help="sweep seed")
    _add(p, "sparsity", ",".join(str(x) for x in DEFAULT_SPARSITY_SWEEP))
    _add(p, "rel-tol", 1e-10, help="PCG relative residual target")
    _add(p, "output", None, help="record output path (default stdout)")
    _add(p, "plot", None, help="write a rank/iterations SVG here")
    _add(p, "large", False, help="lift the desk-scale n cap")
    p.set_defaults(fn=cmd_bench_frozen)

    p = sub.add_parser("bench-stress", help="identity vs Jacobi vs tree stress test")
    _add(p, "n", 8, help="alternative count")
    _add(p, "seed", 0, help="instance seed")
    _add(p, "cg-iters", 500, help="iteration budget per regime")
    _add(p, "output", None, help="record output path (default stdout)")
    _add(p, "plot", None, help="write residual-curve SVG here")
    _add(p, "large", False, help="lift the desk-scale n cap")
    p.set_defaults(fn=cmd_bench_stress)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    required = {"project": "input", "hypo-test": "input"}.get(args.command)
    if required and getattr(args, required) is None:
        print(f"error: --{required} is required", file=sys.stderr)
        return EXIT_INPUT
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
