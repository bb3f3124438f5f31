#!/usr/bin/env python3
"""Registration and validation of options."""
import argparse
import types
import typing
from pathlib import Path
from typing import Literal, Optional, get_args, get_origin

from pydantic import BaseModel, Field, field_validator, model_validator


class BaseConfigModel(BaseModel, extra="forbid"):
    """Base model for configuring options."""

    @classmethod
    def get_allowed_values(cls, field: str):
        """Return a tuple of allowed values for `field`."""
        annotation = cls._get_field_param(field=field, param="annotation")
        if isinstance(annotation, type(Literal[""])):
            return get_args(annotation)
        return None

    @classmethod
    def get_type(cls, field: str):
        """Return type of `field`."""
        type_hint = typing.get_type_hints(cls)[field]
        if isinstance(type_hint, type):
            if isinstance(type_hint, types.GenericAlias):
                return get_origin(type_hint)
            return type_hint
        type_hint_first_arg = get_args(type_hint)[0]
        if isinstance(type_hint_first_arg, type):
            return type_hint_first_arg
        return None

    @classmethod
    def get_default(cls, field: str):
        """Return the default value of `field`, or None if the field is required."""
        if cls.model_fields[field].is_required():
            return None
        return cls.model_fields[field].get_default()

    @classmethod
    def get_description(cls, field: str):
        """Return description of `field`."""
        return cls._get_field_param(field=field, param="description")

    @classmethod
    def from_cli_args(cls, cli_args: argparse.Namespace):
        """Return an instance of the class from CLI args."""
        relevant_args = {
            k: v
            for k, v in vars(cli_args).items()
            if k in cls.model_fields and v is not None
        }
        return cls.model_validate(relevant_args)

    @classmethod
    def _get_field_param(cls, field: str, param: str):
        """Return param `param` of field `field`."""
        return getattr(cls.model_fields[field], param, None)


def _check_ordered_range(value: tuple[float, float]):
    low, high = value
    if not low < high:
        raise ValueError(f"Range must satisfy low < high, got {value}")
    return value


###############################
# Numerical algorithm configs #
###############################
class RootConfig(BaseConfigModel):
    """Tolerances of the bracketed scalar root finder."""

    abs_tol: float = Field(
        default=1e-10, gt=0.0, description="Absolute tolerance on the ray parameter t"
    )
    max_iter: int = Field(
        default=100, ge=1, description="Maximum number of Brent iterations"
    )
    escape_factor: float = Field(
        default=1e12,
        gt=1.0,
        description="Bracket expansion gives up past escape_factor times the initial "
        "upper end (the ray is then considered unbounded)",
    )


class AccelConfig(BaseConfigModel):
    """Options of the restrict-constraints acceleration."""

    base_multiplier: Optional[float] = Field(
        default=None,
        gt=0.0,
        description="Distance of the first probe from the origin. Defaults to the "
        "region's estimated radial length",
    )
    max_iterations: int = Field(
        default=20, ge=1, description="Number of probes before falling back to all"
    )


class DykstraConfig(BaseConfigModel):
    """Options of Dykstra's alternating projections onto a polytope."""

    max_sweeps: int = Field(
        default=1000, ge=1, description="Maximum number of sweeps over all halfspaces"
    )
    tol: float = Field(
        default=1e-9, gt=0.0, description="Stop when a sweep moves the iterate less"
    )


class SubgradientConfig(BaseConfigModel):
    """Options of the projected subgradient method used for generic regions."""

    max_iter: int = Field(default=10000, ge=1, description="Iteration cap")
    tol: float = Field(default=1e-10, gt=0.0, description="Stopping step length")


########################
# Learning and dataset #
########################
class TrainConfig(BaseConfigModel):
    """Options of the supervised training loop."""

    epochs: int = Field(default=200, gt=0, description="Number of training epochs")
    batch_size: int = Field(default=32, gt=0, description="Minibatch size")
    lr: float = Field(default=1e-3, gt=0.0, description="Adam learning rate")
    seed: int = Field(default=0, description="Seed for initialisation and shuffling")
    standardize_targets: bool = Field(
        default=True,
        description="Standardise targets (ignored by the hcr variant, which learns "
        "directions and radii)",
    )
    standardize_inputs: bool = Field(default=False, description="Standardise inputs")
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0, description="Adam beta1")
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0, description="Adam beta2")
    adam_epsilon: float = Field(default=1e-8, gt=0.0, description="Adam epsilon")
    hidden: int = Field(default=128, gt=0, description="Width of the encoder layers")
    activation: Literal["tanh", "identity"] = Field(
        default="tanh", description="Activation of the encoder layers"
    )
    encoder_layers: Literal[1, 2] = Field(
        default=1, description="Number of dense encoder layers"
    )
    log_every: int = Field(
        default=0, ge=0, description="Log the loss every that many epochs (0: never)"
    )


class LagrangianConfig(BaseConfigModel):
    """Options of the penalty (Lagrangian) variant and its dual ascent."""

    multipliers: Optional[tuple[float, ...]] = Field(
        default=None,
        description="Initial multipliers, one per constraint (default: all zero)",
    )
    step: float = Field(default=0.01, ge=0.0, description="Dual ascent step size")
    update_period: int = Field(
        default=1, ge=1, description="Epochs between two dual ascent updates"
    )

    @field_validator("multipliers")
    @classmethod
    def _multipliers_are_nonnegative(cls, value):
        if value is not None and any(lam < 0 for lam in value):
            raise ValueError("Lagrange multipliers must be nonnegative")
        return value


class SyntheticSpec(BaseConfigModel):
    """Description of the synthetic hypersphere dataset."""

    k: int = Field(default=128, gt=0, description="Number of input features")
    n: int = Field(default=768, gt=0, description="Output dimension")
    radius: float = Field(default=10.0, gt=0.0, description="Radius R of the ball")
    n_train: int = Field(default=500, gt=0, description="Number of training samples")
    n_test: int = Field(default=1000, gt=0, description="Number of test samples")
    seed: int = Field(default=0, description="Generation seed")
    train_range: tuple[float, float] = Field(
        default=(-0.8, 0.8), description="Uniform range of the training features"
    )
    test_range: tuple[float, float] = Field(
        default=(-1.0, 1.0), description="Uniform range of the test features"
    )
    weight_range: tuple[float, float] = Field(
        default=(-10.0, 10.0), description="Uniform range of the raw weights"
    )
    strict_margin: float = Field(
        default=1e-9,
        ge=0.0,
        lt=1.0,
        description="Relative margin used to place projected targets strictly inside",
    )

    @field_validator("train_range", "test_range", "weight_range")
    @classmethod
    def _ranges_are_ordered(cls, value):
        return _check_ordered_range(value)


class TimeSeriesSpec(BaseConfigModel):
    """Description of the synthetic random-walk series."""

    n: int = Field(default=48, ge=2, description="Input and output window size")
    length: int = Field(default=480, gt=0, description="Number of points per series")
    step: float = Field(
        default=1.0, gt=0.0, description="Increments are drawn uniformly in +/- step"
    )
    scale: float = Field(default=1.0, gt=0.0, description="Multiplier of increments")
    level: float = Field(default=100.0, description="Starting value of each series")
    train_fraction: float = Field(
        default=0.2, gt=0.0, lt=1.0, description="Fraction of windows used to train"
    )
    seed: int = Field(default=0, description="Generation seed")

    @model_validator(mode="after")
    def _enough_points_for_windows(self):
        n_windows = self.length - 2 * self.n + 1
        if n_windows < 2:
            raise ValueError(
                f"length={self.length} yields {n_windows} windows of size n={self.n}; "
                "need at least 2"
            )
        return self


###################
# CLI subcommands #
###################
class _TrainingOptions(BaseConfigModel):
    """Options shared by the benchmark subcommands."""

    epochs: int = Field(default=200, gt=0, description="Number of training epochs")
    lr: float = Field(default=1e-3, gt=0.0, description="Adam learning rate")
    batch_size: int = Field(default=32, gt=0, description="Minibatch size")
    hidden: int = Field(default=128, gt=0, description="Width of the encoder layers")
    dual_step: float = Field(
        default=0.01, ge=0.0, description="Dual ascent step of the lagrangian variant"
    )
    out: Optional[Path] = Field(default=None, description="Write the JSON report here")
    out_csv: Optional[Path] = Field(
        default=None, description="Write the summary table as CSV here"
    )


class SyntheticBenchOptions(_TrainingOptions):
    """Options of the `bench-synthetic` subcommand."""

    k: int = Field(default=128, gt=0, description="Number of input features")
    n: int = Field(default=768, gt=0, description="Output dimension")
    radius: float = Field(default=10.0, gt=0.0, description="Radius of the ball")
    train: int = Field(default=500, gt=0, description="Number of training samples")
    test: int = Field(default=1000, gt=0, description="Number of test samples")
    seeds: tuple[int, ...] = Field(
        default=tuple(range(10)), min_length=1, description="Seeds of the repeated runs"
    )

    def synthetic_spec(self, seed: int):
        """Return the dataset spec for the run using `seed`."""
        return SyntheticSpec(
            k=self.k,
            n=self.n,
            radius=self.radius,
            n_train=self.train,
            n_test=self.test,
            seed=seed,
        )

    def train_config(self):
        """Return the training configs shared by all runs."""
        return TrainConfig(
            epochs=self.epochs, lr=self.lr, batch_size=self.batch_size, hidden=self.hidden
        )


class TimeSeriesBenchOptions(_TrainingOptions):
    """Options of the `bench-timeseries` subcommand."""

    series_dir: Optional[Path] = Field(
        default=None, description="Directory with one CSV file per series"
    )
    column: Optional[str] = Field(
        default=None, description="CSV column holding the values (default: first)"
    )
    allow_empty: bool = Field(
        default=False, description="Skip empty CSV files instead of failing"
    )
    synthetic: bool = Field(
        default=False, description="Use synthetic random-walk series (the default "
        "when no --series-dir is given)"
    )
    n: int = Field(default=48, ge=2, description="Input and output window size")
    count: int = Field(default=30, gt=0, description="Number of synthetic series")
    length: int = Field(default=480, gt=0, description="Points per synthetic series")
    seed: int = Field(default=0, description="Seed of the synthetic series and models")

    def timeseries_spec(self):
        """Return the spec of the synthetic series."""
        return TimeSeriesSpec(n=self.n, length=self.length, seed=self.seed)

    def train_config(self):
        """Return the training configs used for every series."""
        return TrainConfig(
            epochs=self.epochs,
            lr=self.lr,
            batch_size=self.batch_size,
            hidden=self.hidden,
            seed=self.seed,
            standardize_inputs=True,
            encoder_layers=2,
        )


class RoundtripOptions(BaseConfigModel):
    """Options of the `roundtrip` subcommand."""

    region: Path = Field(description="Constraint-set JSON file")
    points: int = Field(default=10000, gt=0, description="Number of sampled points")
    directions: int = Field(
        default=1000, ge=0, description="Directions for the acceleration check"
    )
    seed: int = Field(default=0, description="Sampling seed")


class ConvertOptions(BaseConfigModel):
    """Options of the `convert` subcommand."""

    region: Path = Field(description="Constraint-set JSON file")
    point: str = Field(description="Comma-separated coordinates of a feasible point")
