"""Benchmarks comparing the four output strategies, plus transform sanity checks."""

import json
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, Field
from sklearn.metrics import mean_squared_error

from . import GeneralDefinitions
from .configs import AccelConfig, LagrangianConfig, SyntheticSpec, TrainConfig
from .constraints import FeasibleRegion
from .datagen import Dataset, TimeSeriesTask, gen_synthetic
from .general_utils import FeasibilityViolationError, HcrIoError
from .hyperspherical import (
    HypersphericalCoord,
    frontier_distance,
    frontier_distance_full_scan,
    from_hyperspherical,
    normalize_direction,
    restricted_set_size,
    to_hyperspherical,
)
from .learner import VARIANTS, predict, predict_batch, train

N_WARMUP_PREDICTIONS = 10
GUARANTEED_FEASIBLE = ("projection", "hcr")
TIMING_FIELDS = (
    "avg_time",
    "max_time",
    "avg_time_mean",
    "avg_time_std",
    "max_time_mean",
    "max_time_std",
)


class MethodRun(BaseModel):
    """Test metrics of one method on one task (a seed or a series)."""

    task: str
    method: str
    error: float = Field(description="MSE, or relative MSE for time series")
    inside_ratio: float = Field(ge=0.0, le=1.0, description="Feasible within tol_feas")
    inside_ratio_exact: float = Field(ge=0.0, le=1.0, description="Feasible exactly")
    avg_time: Optional[float] = Field(default=None, ge=0.0)
    max_time: Optional[float] = Field(default=None, ge=0.0)
    n_predictions: int


class MethodSummary(BaseModel):
    """Mean and population standard deviation of a method's runs."""

    method: str
    n_runs: int
    error_mean: float
    error_std: float = Field(ge=0.0)
    inside_ratio_mean: float = Field(ge=0.0, le=1.0)
    inside_ratio_std: float = Field(ge=0.0)
    inside_ratio_exact_mean: float = Field(ge=0.0, le=1.0)
    inside_ratio_exact_std: float = Field(ge=0.0)
    avg_time_mean: Optional[float] = None
    avg_time_std: Optional[float] = None
    max_time_mean: Optional[float] = None
    max_time_std: Optional[float] = None


class TaskInfo(BaseModel):
    """Region statistics of one task."""

    task: str
    n: int
    m: int
    avg_restricted_set_size: float


class BenchmarkReport(BaseModel):
    """Per-run records of a benchmark and their per-method aggregation."""

    benchmark: str
    error_metric: str
    settings: dict = Field(default_factory=dict)
    tasks: list[TaskInfo] = Field(default_factory=list)
    runs: list[MethodRun] = Field(default_factory=list)
    summary: list[MethodSummary] = Field(default_factory=list)

    @classmethod
    def from_runs(cls, runs: Sequence[MethodRun], **kwargs):
        """Return a report whose summary aggregates `runs`."""
        return cls(runs=list(runs), summary=summarize_runs(runs), **kwargs)

    def summary_frame(self) -> pd.DataFrame:
        """Return the summary as a table with "Metric: statistic" columns."""
        metric = self.error_metric.upper()
        columns = {
            "method": "Method",
            "n_runs": "Runs",
            "error_mean": f"{metric}: mean",
            "error_std": f"{metric}: std",
            "inside_ratio_mean": "Inside ratio: mean",
            "inside_ratio_std": "Inside ratio: std",
            "inside_ratio_exact_mean": "Inside ratio (exact): mean",
            "inside_ratio_exact_std": "Inside ratio (exact): std",
            "avg_time_mean": "Avg. time (s): mean",
            "avg_time_std": "Avg. time (s): std",
            "max_time_mean": "Max time (s): mean",
            "max_time_std": "Max time (s): std",
        }
        frame = pd.DataFrame([row.model_dump() for row in self.summary])
        return frame.reindex(columns=list(columns)).rename(columns=columns)

    def to_json(self, include_timing: bool = True) -> str:
        """Return the report as JSON, optionally without timing fields."""
        data = self.model_dump()
        if not include_timing:
            for row in data["runs"] + data["summary"]:
                for field in TIMING_FIELDS:
                    row.pop(field, None)
        return json.dumps(data, indent=2)

    def export(self, fpath: Path):
        """Write the full report, per-run records included, as JSON."""
        try:
            Path(fpath).write_text(self.to_json())
        except OSError as error:
            raise HcrIoError(f"Cannot write report {fpath}: {error}") from error

    @classmethod
    def from_file(cls, fpath: Path):
        """Return a report written by `export`."""
        try:
            return cls.model_validate_json(Path(fpath).read_text())
        except OSError as error:
            raise HcrIoError(f"Cannot read report {fpath}: {error}") from error

    def to_csv(self, fpath: Path):
        """Write the summary table as CSV."""
        try:
            self.summary_frame().to_csv(fpath, index=False)
        except OSError as error:
            raise HcrIoError(f"Cannot write CSV report {fpath}: {error}") from error

    def print_table(self):
        """Print the summary table, one row per method, to stdout."""
        header = f"Benchmark: {self.benchmark}"
        table_separator = "=" * (len(header) + 4)
        print(table_separator)  # noqa: T201
        print(f"  {header}  ")  # noqa: T201
        print(table_separator)  # noqa: T201
        table = _group_columns_by_prefix(self.summary_frame().set_index("Method"))
        with pd.option_context("display.width", 200, "display.max_columns", None):
            print(table.fillna("NA"))  # noqa: T201
        if self.tasks:
            sizes = [task.avg_restricted_set_size for task in self.tasks]
            print(  # noqa: T201
                f"\nConstraints per task: {sorted({task.m for task in self.tasks})}. "
                f"Avg. restricted-set size: {np.mean(sizes):.3f}"
            )


def _group_columns_by_prefix(dataframe: pd.DataFrame):
    dataframe = dataframe.copy()
    col_tuples_for_multiindex = dataframe.columns.str.split(": ", expand=True).to_numpy()
    dataframe.columns = pd.MultiIndex.from_tuples(
        [(x[0], "") if pd.isna(x[1]) else tuple(x) for x in col_tuples_for_multiindex]
    )
    return dataframe


def summarize_runs(runs: Sequence[MethodRun]) -> list[MethodSummary]:
    """Return the per-method mean and population std of the runs' metrics."""
    if not runs:
        return []
    frame = pd.DataFrame([run.model_dump() for run in runs])
    metrics = ["error", "inside_ratio", "inside_ratio_exact", "avg_time", "max_time"]
    frame[metrics] = frame[metrics].astype(float)
    grouped = frame.groupby("method", sort=False)[metrics]
    means, stds, counts = grouped.mean(), grouped.std(ddof=0), grouped.size()

    def _optional(value):
        return None if pd.isna(value) else float(value)

    order = [m for m in VARIANTS if m in means.index]
    order += [m for m in means.index if m not in order]
    return [
        MethodSummary(
            method=method,
            n_runs=int(counts[method]),
            **{
                f"{metric}_{stat}": _optional(table.loc[method, metric])
                for metric in metrics
                for stat, table in (("mean", means), ("std", stds))
            },
        )
        for method in order
    ]


#################
# Running tasks #
#################
def _map_runs(function, items: list):
    """Apply `function` to `items`, in worker processes if more than one is allowed."""
    n_workers = min(GeneralDefinitions.max_workers(), len(items))
    if n_workers <= 1:
        return [function(item) for item in items]
    logger.debug("Running {} tasks on {} worker processes", len(items), n_workers)
    with ProcessPoolExecutor(max_workers=n_workers) as executor:
        return list(executor.map(function, items))


def _inside_ratios(region: FeasibleRegion, predictions: np.ndarray):
    values = region.evaluate_batch(predictions)
    return (
        float(np.mean(np.all(values <= region.tol_feas, axis=1))),
        float(np.mean(np.all(values <= 0.0, axis=1))),
    )


def evaluate_method(
    task: str,
    variant: str,
    params,
    region: FeasibleRegion,
    test: Dataset,
    relative: bool = False,
    accel: AccelConfig = AccelConfig(),
) -> MethodRun:
    """Return the test metrics of trained `params` used as `variant`.

    Warm-up predictions are made first and discarded. Only the post-processing step
    (projection or hcr conversion) is timed.

    Raises:
        FeasibilityViolationError: If projection or hcr produced an infeasible output.
    """
    for x in test.inputs[:N_WARMUP_PREDICTIONS]:
        predict(variant, params, region, x, accel)
    predictions, times = predict_batch(variant, params, region, test.inputs, accel)

    error = mean_squared_error(test.targets, predictions)
    if relative:
        error /= float(np.var(test.targets))
    inside_ratio, inside_ratio_exact = _inside_ratios(region, predictions)
    if variant in GUARANTEED_FEASIBLE and inside_ratio < 1.0:
        raise FeasibilityViolationError(
            f"{variant} produced infeasible outputs on {task}: "
            f"inside ratio {inside_ratio}"
        )
    run = MethodRun(
        task=task,
        method=variant,
        error=float(error),
        inside_ratio=inside_ratio,
        inside_ratio_exact=inside_ratio_exact,
        avg_time=None if times is None else float(np.mean(times)),
        max_time=None if times is None else float(np.max(times)),
        n_predictions=len(test),
    )
    logger.info(
        "{} | {:<10} error={:.4g} inside={:.3f} avg_time={}",
        task,
        variant,
        run.error,
        run.inside_ratio,
        "NA" if run.avg_time is None else f"{run.avg_time:.3g}s",
    )
    return run


def _hcr_restricted_set_size(region, params, test: Dataset, accel: AccelConfig):
    """Mean restricted-set size over the directions the hcr model predicts."""
    sizes = []
    for x in test.inputs:
        prediction, _ = predict("hcr", params, region, x, accel)
        offset = prediction - region.origin
        if np.linalg.norm(offset) > 0:
            sizes.append(restricted_set_size(region, normalize_direction(offset), accel))
    return float(np.mean(sizes)) if sizes else float(region.m)


def _run_task(
    task: str,
    train_set: Dataset,
    test: Dataset,
    region: FeasibleRegion,
    cfg: TrainConfig,
    lag: Optional[LagrangianConfig],
    relative: bool,
):
    runs = []
    hcr_params = None
    for variant in VARIANTS:
        params = train(variant, train_set, region, cfg, lag).params
        if variant == "hcr":
            hcr_params = params
        runs.append(
            evaluate_method(task, variant, params, region, test, relative=relative)
        )
    info = TaskInfo(
        task=task,
        n=region.n,
        m=region.m,
        avg_restricted_set_size=_hcr_restricted_set_size(
            region, hcr_params, test, AccelConfig()
        ),
    )
    return runs, info


def _synthetic_seed_run(job):
    spec, cfg, lag = job
    train_set, test, region = gen_synthetic(spec)
    return _run_task(
        task=f"seed={spec.seed}",
        train_set=train_set,
        test=test,
        region=region,
        cfg=cfg.model_copy(update={"seed": spec.seed}),
        lag=lag,
        relative=False,
    )


def _timeseries_task_run(job):
    task, cfg, lag = job
    logger.info(
        "Series {}: n={}, m={} constraints", task.name, task.region.n, task.region.m
    )
    return _run_task(
        task=task.name,
        train_set=task.train,
        test=task.test,
        region=task.region,
        cfg=cfg,
        lag=lag,
        relative=True,
    )


def _report_from_results(results, **kwargs):
    runs = [run for task_runs, _ in results for run in task_runs]
    tasks = [info for _, info in results]
    return BenchmarkReport.from_runs(runs, tasks=tasks, **kwargs)


def run_synthetic_bench(
    spec: SyntheticSpec,
    seeds: Sequence[int],
    cfg: TrainConfig = TrainConfig(),
    lag: Optional[LagrangianConfig] = None,
) -> BenchmarkReport:
    """Train and evaluate the four methods on the synthetic task for every seed.

    The seed sets both the dataset and the model initialisation of its run.
    """
    jobs = [(spec.model_copy(update={"seed": seed}), cfg, lag) for seed in seeds]
    results = _map_runs(_synthetic_seed_run, jobs)
    return _report_from_results(
        results,
        benchmark="synthetic",
        error_metric="mse",
        settings={
            "spec": spec.model_dump(exclude={"seed"}),
            "seeds": list(seeds),
            "train": cfg.model_dump(),
            "lagrangian": (lag or LagrangianConfig()).model_dump(),
        },
    )


def run_timeseries_bench(
    series: Sequence[TimeSeriesTask],
    cfg: TrainConfig = TrainConfig(),
    lag: Optional[LagrangianConfig] = None,
) -> BenchmarkReport:
    """Train and evaluate the four methods on every series; errors are relative MSE.

    The relative MSE is the MSE divided by the variance of the test targets.
    """
    results = _map_runs(_timeseries_task_run, [(task, cfg, lag) for task in series])
    return _report_from_results(
        results,
        benchmark="timeseries",
        error_metric="r-mse",
        settings={
            "series": [task.name for task in series],
            "train": cfg.model_dump(),
            "lagrangian": (lag or LagrangianConfig()).model_dump(),
        },
    )


####################
# Transform checks #
####################
class AccelerationReport(BaseModel):
    """Agreement of the restricted and full frontier searches."""

    n_directions: int
    base_multiplier: float
    max_relative_difference: float
    mean_restricted_set_size: float
    max_restricted_set_size: int


class RoundtripReport(BaseModel):
    """Reconstruction error of y -> (d, r) -> y on sampled feasible points."""

    n: int
    m: int
    n_points: int
    max_error: float
    mean_error: float
    n_infeasible: int
    acceleration: Optional[AccelerationReport] = None

    def print_report(self):
        """Print the report as "key: value" lines."""
        for key, value in self.model_dump(exclude={"acceleration"}).items():
            print(f"{key}: {value}")  # noqa: T201
        if self.acceleration is not None:
            for key, value in self.acceleration.model_dump().items():
                print(f"acceleration.{key}: {value}")  # noqa: T201


def _random_directions(rng: np.random.Generator, n_directions: int, n_dims: int):
    directions = rng.standard_normal((n_directions, n_dims))
    return np.array([normalize_direction(d) for d in directions]).reshape(
        n_directions, n_dims
    )


def _load_region(region: Union[FeasibleRegion, Path, str]) -> FeasibleRegion:
    if isinstance(region, FeasibleRegion):
        return region
    return FeasibleRegion.from_file(Path(region))


def run_acceleration_check(
    region: Union[FeasibleRegion, Path],
    n_directions: int = 1000,
    seed: int = 0,
    accel: AccelConfig = AccelConfig(),
) -> AccelerationReport:
    """Compare s(d) with and without the restrict trick along random directions."""
    region = _load_region(region)
    rng = np.random.default_rng(seed)
    differences, sizes = [], []
    for direction in _random_directions(rng, n_directions, region.n):
        restricted, _ = frontier_distance(region, direction, accel)
        full, _ = frontier_distance_full_scan(region, direction)
        differences.append(abs(restricted - full) / full)
        sizes.append(restricted_set_size(region, direction, accel))
    base = accel.base_multiplier or region.radial_length
    return AccelerationReport(
        n_directions=n_directions,
        base_multiplier=base,
        max_relative_difference=float(np.max(differences, initial=0.0)),
        mean_restricted_set_size=float(np.mean(sizes)) if sizes else 0.0,
        max_restricted_set_size=int(np.max(sizes, initial=0)),
    )


def run_roundtrip_check(
    region_file: Union[FeasibleRegion, Path],
    n_points: int = 10000,
    seed: int = 0,
    n_directions: int = 0,
    accel: AccelConfig = AccelConfig(),
) -> RoundtripReport:
    """Sample feasible points from uniform (d, r), convert back and forth, measure drift.

    Radii 0 and 1 are always among the samples (when `n_points` allows it). With
    `n_directions` > 0 the report includes `run_acceleration_check`.
    """
    region = _load_region(region_file)
    rng = np.random.default_rng(seed)
    directions = _random_directions(rng, n_points, region.n)
    radii = rng.uniform(0.0, 1.0, size=n_points)
    radii[:2] = [0.0, 1.0][: min(2, n_points)]

    errors = np.empty(n_points)
    n_infeasible = 0
    for i_point, (direction, radius) in enumerate(zip(directions, radii)):
        coord = HypersphericalCoord(direction=direction, radius=radius)
        point = from_hyperspherical(region, coord, accel)
        if not region.is_feasible(point):
            n_infeasible += 1
            errors[i_point] = np.inf
            continue
        reconstructed = from_hyperspherical(
            region, to_hyperspherical(region, point, accel), accel
        )
        errors[i_point] = np.linalg.norm(reconstructed - point)

    report = RoundtripReport(
        n=region.n,
        m=region.m,
        n_points=n_points,
        max_error=float(np.max(errors)),
        mean_error=float(np.mean(errors)),
        n_infeasible=n_infeasible,
    )
    if n_directions > 0:
        report.acceleration = run_acceleration_check(
            region, n_directions=n_directions, seed=seed, accel=accel
        )
    return report
