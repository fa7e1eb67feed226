import sys
import logging
import argparse

from pathlib import Path
from typing import List, Optional

from quantum_integration.oracles import EstimatorMethod
from quantum_integration.registry import builtin_integrand_set
from quantum_integration.stochastic import MomentSummary, random_walk_spec, brute_force_path_moment, unscale_moments, summarize_moments
from quantum_integration.estimators import describe_process
from quantum_integration.harness import (
    ConfigException,
    FitException,
    SweepConfig,
    SweepRecord,
    SweepRunner,
    load_config,
    emit_csv,
    read_csv,
    write_records,
    write_failures,
    fit_scaling,
    parse_number,
)

logger = logging.getLogger(__name__)

EXIT_SUCCESS = 0
EXIT_CONFIG_ERROR = 1
EXIT_CELL_FAILURES = 2

DEMO_EPSILON = 2.0 ** -6

# NOTE: |s>, |t>, U, |U_ts|, readout, complexity
CHART_ROWS = [
    ("qm_iterated", "|0>|0...0>", "|1>|0...0>", "W^-1 R W", "S", "iterated sampling", "O(1/eps)"),
    ("qm_fft", "|0>|0...0>", "|1>|0...0>", "W^-1 R W", "S", "FFT", "O(1/eps)"),
    ("qc_sampling", "|0...0,0>", "sum_{b(i)=1} |i>", "W", "sqrt(S)", "sampling", "O(1/eps^2)"),
    ("qc_fft", "|0...0,0>", "sum_{b(i)=1} |i>", "W", "sqrt(S)", "FFT", "O(1/eps)"),
    ("sqrt_sampling", "|0>|0...0>", "sum sqrt(f)|1>|a>", "R^ W", "sqrt(S)", "sampling", "O(1/eps^2)"),
    ("sqrt_fft", "|0>|0...0>", "sum sqrt(f)|1>|a>", "R^ W", "sqrt(S)", "FFT", "O(1/eps)"),
]
CLASSICAL_ROWS = [
    ("classical_exact", "-", "-", "-", "-", "enumeration", "O(M^d)"),
    ("classical_mc", "-", "-", "-", "-", "Monte Carlo", "O(1/eps^2)"),
]

def configure_logging(verbosity: int):
    level = logging.WARNING if verbosity <= 0 else (logging.INFO if verbosity == 1 else logging.DEBUG)
    logging.basicConfig(level=level, format="[%(levelname)s]: %(message)s", force=True)

def report_failures(runner: SweepRunner, output: Optional[Path]) -> int:
    if not runner.failures:
        return EXIT_SUCCESS

    if output is not None:
        sidecar = output.with_name(output.name + ".errors.log")
        write_failures(runner.failures, sidecar)
        logger.warning(f"{len(runner.failures)} cell(s) failed, see {sidecar}")
    else:
        logger.warning(f"{len(runner.failures)} cell(s) failed")

    return EXIT_CELL_FAILURES

def cmd_sweep(args: argparse.Namespace) -> int:
    try:
        config = load_config(
            args.config,
            output=args.out,
            seed_base=args.seed_base,
            exact_readout=args.exact,
            workers=args.workers,
            record_timing=args.timing,
        )
    except ConfigException as exception:
        logger.error(exception.message)
        return EXIT_CONFIG_ERROR

    runner = SweepRunner(config)
    records = runner.run()

    if config.output is not None:
        emit_csv(records, config.output)
        logger.info(f"wrote {len(records)} record(s) to {config.output}")
    else:
        write_records(records, sys.stdout)

    return report_failures(runner, config.output)

def cmd_fit(args: argparse.Namespace) -> int:
    try:
        records = read_csv(args.csv)
        fit = fit_scaling(records, args.method, use_target=args.target, integrand=args.integrand)
    except (OSError, ValueError, ConfigException) as exception:
        logger.error(f"could not read {args.csv}: {exception}")
        return EXIT_CONFIG_ERROR
    except FitException as exception:
        logger.error(exception.message)
        return EXIT_CONFIG_ERROR

    print(f"method={fit.method} slope={fit.slope:.4f} intercept={fit.intercept:.4f} r2={fit.r_squared:.4f} points={fit.points}")

    return EXIT_SUCCESS

def format_row(cells: List[str], widths: List[int]) -> str:
    return "  ".join(cell.ljust(width) for cell, width in zip(cells, widths))

def demo_table(records: List[SweepRecord]) -> List[List[str]]:
    table = [["method", "|s>", "|t>", "U", "|U_ts|", "readout", "complexity", "integrand", "value", "true", "abs_error", "queries"]]

    for tag, *chart in CHART_ROWS + CLASSICAL_ROWS:
        for record in records:
            if record.method == tag:
                table.append([tag, *chart, record.integrand, f"{record.value:.6f}", f"{record.true_value:.6f}", f"{record.abs_error:.2e}", str(record.oracle_queries)])

    return table

def cmd_demo(args: argparse.Namespace) -> int:
    config = SweepConfig(
        integrands=builtin_integrand_set(),
        estimators=[row[0] for row in CHART_ROWS + CLASSICAL_ROWS],
        epsilons=[DEMO_EPSILON],
        seeds=[0],
        output=args.out,
        exact_readout=args.exact,
        seed_base=args.seed_base,
    )

    runner = SweepRunner(config)
    records = runner.run()

    table = demo_table(records)
    widths = [max(len(row[column]) for row in table) for column in range(len(table[0]))]

    print(f"eps = {DEMO_EPSILON:g}")
    for row in table:
        print(format_row(row, widths))

    if config.output is not None:
        emit_csv(records, config.output)

    return report_failures(runner, config.output)

def exact_walk_summary(steps: int, max_moment: int = 3) -> MomentSummary:
    scaled = {moment: brute_force_path_moment(random_walk_spec(steps, moment)) for moment in range(1, max_moment + 1)}
    low, high = random_walk_spec(steps).statistic_range
    return summarize_moments(unscale_moments(scaled, low, high))

def cmd_moments(args: argparse.Namespace) -> int:
    spec = random_walk_spec(args.steps)

    estimated = describe_process(spec, args.eps, EstimatorMethod(args.method), seed=args.seed_base)
    exact = exact_walk_summary(args.steps)

    print(f"{args.steps}-step walk, method={args.method}, eps={args.eps:g}")
    print(f"  mean      estimated={estimated.mean:.6f} exact={exact.mean:.6f}")
    print(f"  variance  estimated={estimated.variance:.6f} exact={exact.variance:.6f}")
    if estimated.skewness is not None and exact.skewness is not None:
        print(f"  skewness  estimated={estimated.skewness:.6f} exact={exact.skewness:.6f}")

    return EXIT_SUCCESS

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quantum-integration", description="Quantum mean estimation and counting on a statevector simulator.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")

    sub = parser.add_subparsers(dest="cmd", required=True)

    sweep = sub.add_parser("sweep", help="Run an estimator x integrand x eps x seed grid from a config file.")
    sweep.add_argument("config", type=Path)
    sweep.add_argument("--out", type=Path, default=None, help="CSV output, overrides the config; stdout when neither is set")
    sweep.add_argument("--seed-base", type=int, default=None)
    sweep.add_argument("--exact", action="store_true", default=None, help="Read probabilities exactly instead of sampling")
    sweep.add_argument("--timing", action="store_true", default=None, help="Record wall_time_ms (breaks byte-identical output)")
    sweep.add_argument("--workers", type=int, default=None)
    sweep.set_defaults(handler=cmd_sweep)

    fit = sub.add_parser("fit", help="Fit log2(queries) against log2(1/error) for one method of a sweep CSV.")
    fit.add_argument("csv", type=Path)
    fit.add_argument("--method", type=str, required=True)
    fit.add_argument("--integrand", type=str, default=None)
    fit.add_argument("--target", action="store_true", help="Regress on the requested eps instead of the achieved error")
    fit.set_defaults(handler=cmd_fit)

    demo = sub.add_parser("demo", help="Run every chart row on the built-in integrands at eps = 2^-6.")
    demo.add_argument("--out", type=Path, default=None)
    demo.add_argument("--seed-base", type=int, default=0)
    demo.add_argument("--exact", action="store_true")
    demo.set_defaults(handler=cmd_demo)

    moments = sub.add_parser("moments", help="Mean, variance and skewness of a fair +-1 walk's final position.")
    moments.add_argument("--steps", type=int, required=True)
    moments.add_argument("--method", type=str, default=EstimatorMethod.QM_GROVER_FFT.value, choices=[method.value for method in EstimatorMethod])
    moments.add_argument("--eps", type=parse_number, default=DEMO_EPSILON)
    moments.add_argument("--seed-base", type=int, default=0)
    moments.set_defaults(handler=cmd_moments)

    return parser

def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    configure_logging(args.verbose)

    return args.handler(args)
