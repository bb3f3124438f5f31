"""Datasets: the synthetic hypersphere task and the time-series polytope task."""

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from loguru import logger

from . import GeneralDefinitions
from .configs import SyntheticSpec, TimeSeriesSpec
from .constraints import FeasibleRegion, Halfspace
from .general_utils import (
    DegenerateRegionError,
    HcrIoError,
    ParseError,
)
from .projection import chebyshev_center, project, project_ball

DATASET_FORMAT_VERSION = 1
ORIGIN_PULL_FRACTION = 0.1


@dataclass
class Dataset:
    """Input rows x (N x k) with their target rows y (N x n).

    `feasible` flags the rows whose target lies in the region the dataset was built
    for (None when unknown).
    """

    inputs: np.ndarray
    targets: np.ndarray
    feasible: Optional[np.ndarray] = None

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.targets = np.atleast_2d(np.asarray(self.targets, dtype=float))
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError(
                f"Got {self.inputs.shape[0]} input rows and "
                f"{self.targets.shape[0]} target rows"
            )
        if not (np.all(np.isfinite(self.inputs)) and np.all(np.isfinite(self.targets))):
            raise ValueError("Dataset has non-finite entries")
        if self.feasible is not None:
            self.feasible = np.asarray(self.feasible, dtype=bool).reshape(-1)

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def k(self) -> int:
        """Number of input features."""
        return self.inputs.shape[1]

    @property
    def n(self) -> int:
        """Output dimension."""
        return self.targets.shape[1]

    def with_feasibility(self, region: FeasibleRegion):
        """Return a copy whose `feasible` flags are computed in `region`."""
        values = region.evaluate_batch(self.targets)
        feasible = np.all(values <= region.tol_feas, axis=1)
        return Dataset(inputs=self.inputs, targets=self.targets, feasible=feasible)

    def save(self, fpath: Path):
        """Write the dataset to a numpy `.npz` archive."""
        arrays = {"inputs": self.inputs, "targets": self.targets}
        if self.feasible is not None:
            arrays["feasible"] = self.feasible
        try:
            with open(fpath, "wb") as dataset_file:
                np.savez(dataset_file, format_version=DATASET_FORMAT_VERSION, **arrays)
        except OSError as error:
            raise HcrIoError(f"Cannot write dataset {fpath}: {error}") from error

    @classmethod
    def load(cls, fpath: Path):
        """Return a dataset written by `save`."""
        try:
            with np.load(fpath) as archive:
                version = int(archive["format_version"])
                if version != DATASET_FORMAT_VERSION:
                    raise ParseError(f"{fpath}: unsupported format version {version}")
                return cls(
                    inputs=archive["inputs"],
                    targets=archive["targets"],
                    feasible=archive["feasible"] if "feasible" in archive else None,
                )
        except OSError as error:
            raise HcrIoError(f"Cannot read dataset {fpath}: {error}") from error
        except (KeyError, ValueError) as error:
            raise ParseError(f"{fpath}: invalid dataset archive ({error})") from error


#######################
# Synthetic hypersphere
#######################
def normalized_weight_matrix(
    rng: np.random.Generator,
    n: int,
    k: int,
    weight_range: tuple[float, float] = (-10.0, 10.0),
) -> np.ndarray:
    """Return an n x k matrix drawn uniformly in `weight_range`, rows scaled to sum 1.

    Rows whose sum is within 1e-9 of zero are drawn again.
    """
    weights = rng.uniform(*weight_range, size=(n, k))
    row_sums = weights.sum(axis=1)
    near_zero = np.abs(row_sums) < 1e-9
    while np.any(near_zero):
        weights[near_zero] = rng.uniform(*weight_range, size=(near_zero.sum(), k))
        row_sums = weights.sum(axis=1)
        near_zero = np.abs(row_sums) < 1e-9
    return weights / row_sums[:, None]


def _spec_digest(spec) -> str:
    payload = f"{type(spec).__name__}:{spec.model_dump_json()}"
    return hashlib.sha256(payload.encode()).hexdigest()


def gen_synthetic(spec: SyntheticSpec = SyntheticSpec(), use_cache: bool = True):
    """Generate the synthetic hypersphere task.

    Targets are y = R W x, with W from `normalized_weight_matrix`, then projected
    strictly inside the ball of radius R. Train and test inputs are drawn from
    different uniform ranges.

    Args:
        spec (SyntheticSpec): Dataset description.
        use_cache (bool): Read/write the generated datasets in the dataset cache.

    Returns:
        tuple[Dataset, Dataset, FeasibleRegion]: train set, test set, region.
    """
    region = FeasibleRegion.ball(
        center=np.zeros(spec.n), radius=spec.radius, strict_margin=spec.strict_margin
    )

    cache_dir = GeneralDefinitions.dataset_cache_directory()
    digest = _spec_digest(spec)
    cache_paths = [
        cache_dir / f"synthetic-{digest}-{part}.npz" for part in ("train", "test")
    ]
    if use_cache and all(path.exists() for path in cache_paths):
        logger.debug("Loading cached synthetic dataset {}", digest[:12])
        train, test = (Dataset.load(path) for path in cache_paths)
        return train, test, region

    rng = np.random.default_rng(spec.seed)
    weights = normalized_weight_matrix(rng, spec.n, spec.k, spec.weight_range)

    def _sample(n_samples: int, feature_range):
        inputs = rng.uniform(*feature_range, size=(n_samples, spec.k))
        raw_targets = spec.radius * inputs @ weights.T
        targets = np.array(
            [
                project_ball(
                    y, region.origin, spec.radius, strict_margin=spec.strict_margin
                )
                for y in raw_targets
            ]
        )
        return Dataset(inputs=inputs, targets=targets).with_feasibility(region)

    train = _sample(spec.n_train, spec.train_range)
    test = _sample(spec.n_test, spec.test_range)

    if use_cache:
        cache_dir.mkdir(parents=True, exist_ok=True)
        for dataset, path in zip((train, test), cache_paths):
            dataset.save(path)
    return train, test, region


###############
# Time series #
###############
@dataclass
class TimeSeriesTask:
    """One series split into window pairs, with the region built from its train part."""

    name: str
    train: Dataset
    test: Dataset
    region: FeasibleRegion


def build_timeseries_region(
    train: Dataset, strict_margin: float = 1e-9
) -> FeasibleRegion:
    """Return the bounds-and-max-deviation polytope of the training targets.

    Constraint order: v_i <= ub_i and -v_i <= -lb_i for every position i, then
    v_i - v_{i+1} <= d_max and v_{i+1} - v_i <= d_max for consecutive positions. The
    bounds are per-position extremes of the training targets and d_max is their
    largest deviation between consecutive values. The origin is the per-position
    mean, pulled towards the Chebyshev centre if it is not strictly interior.

    Raises:
        DegenerateRegionError: If some position has ub <= lb or if d_max <= 0.
    """
    targets = train.targets
    n_dims = targets.shape[1]
    if n_dims < 2:
        raise ValueError(f"Windows need at least 2 values, got {n_dims}")
    upper, lower = targets.max(axis=0), targets.min(axis=0)
    flat = np.flatnonzero(upper <= lower)
    if flat.size:
        raise DegenerateRegionError(
            f"Training targets are constant at positions {flat.tolist()}"
        )
    max_deviation = float(np.max(np.abs(np.diff(targets, axis=1))))
    if not max_deviation > 0:
        raise DegenerateRegionError("Training targets have no consecutive deviation")

    constraints = []
    eye = np.eye(n_dims)
    for i in range(n_dims):
        constraints.append(Halfspace(normal=eye[i], offset=upper[i]))
        constraints.append(Halfspace(normal=-eye[i], offset=-lower[i]))
    for i in range(n_dims - 1):
        step = eye[i] - eye[i + 1]
        constraints.append(Halfspace(normal=step, offset=max_deviation))
        constraints.append(Halfspace(normal=-step, offset=max_deviation))

    origin = targets.mean(axis=0)
    normals = np.array([c.normal for c in constraints])
    offsets = np.array([c.offset for c in constraints])
    if np.any(normals @ origin - offsets >= 0):
        center, _ = chebyshev_center((normals, offsets))
        logger.warning("Mean of the training targets is on the frontier. Nudging it.")
        origin = origin + ORIGIN_PULL_FRACTION * (center - origin)

    return FeasibleRegion(
        constraints=constraints, origin=origin, strict_margin=strict_margin
    )


def make_windows(values, n: int, train_fraction: float = 0.2):
    """Split a series into (input window, next window) pairs, both of size n.

    The first `train_fraction` of the pairs (chronologically) form the training set.

    Returns:
        tuple[Dataset, Dataset]: train and test pairs.
    """
    values = np.asarray(values, dtype=float).reshape(-1)
    n_windows = values.shape[0] - 2 * n + 1
    if n_windows < 2:
        raise ValueError(
            f"A series of {values.shape[0]} values yields {n_windows} window pairs of "
            f"size {n}. Need at least 2."
        )
    windows = np.lib.stride_tricks.sliding_window_view(values, 2 * n)
    inputs, targets = windows[:, :n], windows[:, n:]
    n_train = min(max(1, int(round(train_fraction * n_windows))), n_windows - 1)
    return (
        Dataset(inputs=inputs[:n_train], targets=targets[:n_train]),
        Dataset(inputs=inputs[n_train:], targets=targets[n_train:]),
    )


def prepare_task(name: str, values, n: int, train_fraction: float = 0.2):
    """Return the task of one series, with test targets projected onto its region."""
    train, test = make_windows(values, n=n, train_fraction=train_fraction)
    region = build_timeseries_region(train)
    projected = np.array([project(region, target) for target in test.targets])
    n_moved = int(np.sum(np.any(projected != test.targets, axis=1)))
    if n_moved:
        logger.debug("{}: projected {} of {} test targets", name, n_moved, len(test))
    return TimeSeriesTask(
        name=name,
        train=train.with_feasibility(region),
        test=Dataset(inputs=test.inputs, targets=projected).with_feasibility(region),
        region=region,
    )


def prepare_tasks(named_series: dict, n: int, train_fraction: float = 0.2):
    """Return the tasks of several series, skipping those with a degenerate region."""
    tasks = []
    for name, values in named_series.items():
        try:
            task = prepare_task(
                name=name, values=values, n=n, train_fraction=train_fraction
            )
        except DegenerateRegionError as error:
            logger.warning("Skipping series {}: {}", name, error)
            continue
        logger.debug("Series {}: region with m={} constraints", name, task.region.m)
        tasks.append(task)
    return tasks


def random_walk(rng: np.random.Generator, spec: TimeSeriesSpec) -> np.ndarray:
    """Return a series starting at `spec.level` with increments in +/- step * scale."""
    increments = spec.scale * rng.uniform(-spec.step, spec.step, size=spec.length - 1)
    return spec.level + np.concatenate([[0.0], np.cumsum(increments)])


def gen_synthetic_timeseries(
    n_series: int,
    n: int = 48,
    seed: int = 0,
    spec: Optional[TimeSeriesSpec] = None,
):
    """Return random-walk tasks with input and output windows of size n.

    `spec`, when given, overrides `n` and `seed`. See `prepare_tasks`.
    """
    spec = spec or TimeSeriesSpec(n=n, seed=seed)
    rng = np.random.default_rng(spec.seed)
    named_series = {
        f"synthetic-{i_series:03d}": random_walk(rng, spec)
        for i_series in range(n_series)
    }
    return prepare_tasks(named_series, n=spec.n, train_fraction=spec.train_fraction)


def load_csv_series(
    path: Path, column: Optional[str] = None, allow_empty: bool = False
) -> list[float]:
    """Return the values of a CSV series, in file order.

    Without `column`, the file has no header and its first column is used. With
    `column`, the first line is a header naming the columns.

    Raises:
        HcrIoError: If the file cannot be read.
        ParseError: If a cell is not a finite number (with its line number), if the
            column is missing or if the file is empty and `allow_empty` is False.
    """
    try:
        frame = pd.read_csv(
            path,
            header=None if column is None else 0,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=False,
        )
    except pd.errors.EmptyDataError:
        frame = pd.DataFrame()
    except (OSError, UnicodeDecodeError) as error:
        raise HcrIoError(f"Cannot read series {path}: {error}") from error
    except pd.errors.ParserError as error:
        raise ParseError(f"{path}: {error}") from error

    if frame.empty:
        if allow_empty:
            return []
        raise ParseError(f"{path}: no values found")

    if column is None:
        cells = frame.iloc[:, 0]
        first_data_line = 1
    else:
        if column not in frame.columns:
            raise ParseError(f"{path}: no column named {column!r}", line=1)
        cells = frame[column]
        first_data_line = 2

    values = pd.to_numeric(cells.str.strip(), errors="coerce")
    bad_rows = np.flatnonzero(~np.isfinite(values.to_numpy(dtype=float)))
    if bad_rows.size:
        row = int(bad_rows[0])
        raise ParseError(
            f"{path}: not a finite number: {cells.iloc[row]!r}",
            line=row + first_data_line,
        )
    return values.astype(float).tolist()


def tasks_from_csv_dir(
    directory: Path,
    n: int = 48,
    column: Optional[str] = None,
    train_fraction: float = 0.2,
    allow_empty: bool = False,
):
    """Return one task per `*.csv` file in `directory`, in file name order.

    Empty files raise `ParseError` unless `allow_empty` is set, in which case they are
    skipped with a warning.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise HcrIoError(f"Series directory not found: {directory}")
    fpaths = sorted(directory.glob("*.csv"))
    if not fpaths:
        raise HcrIoError(f"No CSV files in {directory}")

    named_series = {}
    for fpath in fpaths:
        values = load_csv_series(fpath, column=column, allow_empty=allow_empty)
        if not values:
            logger.warning("Skipping empty series {}", fpath)
            continue
        if len(values) < 2 * n + 1:
            raise ParseError(f"{fpath}: {len(values)} values, need {2 * n + 1}")
        named_series[fpath.stem] = values
    return prepare_tasks(named_series, n=n, train_fraction=train_fraction)
