#!/usr/bin/env python3
"""Commands supported by the package's script."""
from loguru import logger

from .benchmark import run_roundtrip_check, run_synthetic_bench, run_timeseries_bench
from .configs import (
    ConvertOptions,
    LagrangianConfig,
    RoundtripOptions,
    SyntheticBenchOptions,
    TimeSeriesBenchOptions,
)
from .constraints import FeasibleRegion
from .datagen import gen_synthetic_timeseries, tasks_from_csv_dir
from .general_utils import ParseError
from .hyperspherical import frontier_distance, to_hyperspherical


def _publish(report, options):
    report.print_table()
    if options.out is not None:
        report.export(options.out)
        logger.info("Report written to {}", options.out)
    if options.out_csv is not None:
        report.to_csv(options.out_csv)
        logger.info("Summary table written to {}", options.out_csv)


def bench_synthetic(args):
    """Run the synthetic hypersphere benchmark."""
    options = SyntheticBenchOptions.from_cli_args(args)
    report = run_synthetic_bench(
        spec=options.synthetic_spec(seed=options.seeds[0]),
        seeds=options.seeds,
        cfg=options.train_config(),
        lag=LagrangianConfig(step=options.dual_step),
    )
    _publish(report, options)


def bench_timeseries(args):
    """Run the time-series benchmark on CSV series or synthetic random walks."""
    options = TimeSeriesBenchOptions.from_cli_args(args)
    if options.series_dir is not None and not options.synthetic:
        tasks = tasks_from_csv_dir(
            options.series_dir,
            n=options.n,
            column=options.column,
            allow_empty=options.allow_empty,
        )
    else:
        tasks = gen_synthetic_timeseries(
            n_series=options.count, spec=options.timeseries_spec()
        )
    if not tasks:
        logger.warning("No usable series. Nothing to benchmark.")
    report = run_timeseries_bench(
        series=tasks,
        cfg=options.train_config(),
        lag=LagrangianConfig(step=options.dual_step),
    )
    _publish(report, options)


def roundtrip(args):
    """Check the round trip y -> (d, r) -> y on a constraint set."""
    options = RoundtripOptions.from_cli_args(args)
    report = run_roundtrip_check(
        FeasibleRegion.from_file(options.region),
        n_points=options.points,
        seed=options.seed,
        n_directions=options.directions,
    )
    report.print_report()


def _parse_point(text: str):
    try:
        return [float(value) for value in text.split(",")]
    except ValueError as error:
        raise ParseError(f"Invalid point {text!r}: {error}") from error


def convert(args):
    """Print d, r and s(d) for a feasible point."""
    options = ConvertOptions.from_cli_args(args)
    region = FeasibleRegion.from_file(options.region)
    coord = to_hyperspherical(region, _parse_point(options.point))
    frontier, binding = frontier_distance(region, coord.direction)
    direction = ", ".join(f"{value:.12g}" for value in coord.direction)
    print(f"d = ({direction})")  # noqa: T201
    print(f"r = {coord.radius:.12g}")  # noqa: T201
    print(f"s = {frontier:.12g}")  # noqa: T201
    print(f"binding constraint = {binding}")  # noqa: T201
