"""Small dense regression models, trained with Adam, for the four output strategies.

Variants:
    simple: plain regression head.
    lagrangian: regression head trained with constraint penalties and dual ascent.
    projection: trained like `simple`; predictions are projected onto the region.
    hcr: predicts a direction and a radius, converted to a point of the region.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional, get_args

import numpy as np
from loguru import logger
from pydantic import BaseModel
from scipy.special import expit
from sklearn.preprocessing import StandardScaler

from .configs import AccelConfig, LagrangianConfig, TrainConfig
from .constraints import FeasibleRegion
from .general_utils import (
    DimensionMismatchError,
    HcrIoError,
    InfeasibleTargetsError,
    NonFiniteLossError,
    ParseError,
    as_vector,
    stopwatch,
)
from .hyperspherical import (
    HypersphericalCoord,
    from_hyperspherical,
    normalize_direction,
    to_hyperspherical_batch,
)
from .projection import project

Variant = Literal["simple", "lagrangian", "projection", "hcr"]
VARIANTS: tuple[str, ...] = get_args(Variant)
CHECKPOINT_FORMAT = "pyhcr-checkpoint"
CHECKPOINT_VERSION = 1


class _Checkpoint(BaseModel):
    format: Literal["pyhcr-checkpoint"] = CHECKPOINT_FORMAT
    version: Literal[1] = CHECKPOINT_VERSION
    variant: Variant
    activation: Literal["tanh", "identity"]
    shapes: dict[str, tuple[int, ...]]
    arrays: dict[str, list]
    scalers: dict[str, Optional[dict[str, list[float]]]]


@dataclass
class ModelParameters:
    """Weights of an encoder followed by the variant's output head(s).

    Arrays are named `encoder_w{i}`/`encoder_b{i}` for the dense encoder layers,
    `head_w`/`head_b` for the n outputs (the direction for the hcr variant) and, for
    the hcr variant only, `radius_w`/`radius_b`.
    """

    variant: str
    arrays: dict[str, np.ndarray]
    activation: str = "tanh"
    input_scaler: Optional[tuple[np.ndarray, np.ndarray]] = None
    target_scaler: Optional[tuple[np.ndarray, np.ndarray]] = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"Unknown variant {self.variant!r}. Use one of {VARIANTS}")
        for name, array in self.arrays.items():
            if not np.all(np.isfinite(array)):
                raise ValueError(f"Parameter {name} has non-finite entries")

    @property
    def n_layers(self) -> int:
        """Number of dense encoder layers."""
        return sum(name.startswith("encoder_w") for name in self.arrays)

    @property
    def k(self) -> int:
        """Input dimension."""
        return self.arrays["encoder_w0"].shape[0]

    @property
    def hidden(self) -> int:
        """Width of the encoder."""
        return self.arrays["encoder_w0"].shape[1]

    @property
    def n(self) -> int:
        """Output dimension."""
        return self.arrays["head_w"].shape[1]

    def shapes(self) -> dict[str, tuple[int, ...]]:
        """Return the shape of every array."""
        return {name: array.shape for name, array in self.arrays.items()}

    def save(self, fpath: Path):
        """Write the parameters to a JSON checkpoint with a shape header."""
        checkpoint = _Checkpoint(
            variant=self.variant,
            activation=self.activation,
            shapes=self.shapes(),
            arrays={name: array.tolist() for name, array in self.arrays.items()},
            scalers={
                "input": _scaler_to_dict(self.input_scaler),
                "target": _scaler_to_dict(self.target_scaler),
            },
        )
        try:
            Path(fpath).write_text(checkpoint.model_dump_json(indent=2))
        except OSError as error:
            raise HcrIoError(f"Cannot write checkpoint {fpath}: {error}") from error

    @classmethod
    def load(cls, fpath: Path):
        """Return the parameters stored in a checkpoint written by `save`."""
        try:
            raw = Path(fpath).read_text()
        except OSError as error:
            raise HcrIoError(f"Cannot read checkpoint {fpath}: {error}") from error
        try:
            checkpoint = _Checkpoint.model_validate(json.loads(raw))
        except json.JSONDecodeError as error:
            raise ParseError(f"{fpath}: {error.msg}", line=error.lineno) from error
        except ValueError as error:
            raise ParseError(f"{fpath}: invalid checkpoint ({error})") from error

        arrays = {}
        for name, values in checkpoint.arrays.items():
            array = np.asarray(values, dtype=float)
            if array.shape != tuple(checkpoint.shapes.get(name, ())):
                raise ParseError(
                    f"{fpath}: array {name} has shape {array.shape}, header says "
                    f"{checkpoint.shapes.get(name)}"
                )
            arrays[name] = array
        return cls(
            variant=checkpoint.variant,
            arrays=arrays,
            activation=checkpoint.activation,
            input_scaler=_scaler_from_dict(checkpoint.scalers.get("input")),
            target_scaler=_scaler_from_dict(checkpoint.scalers.get("target")),
        )


def _scaler_to_dict(scaler):
    if scaler is None:
        return None
    mean, scale = scaler
    return {"mean": mean.tolist(), "scale": scale.tolist()}


def _scaler_from_dict(data):
    if data is None:
        return None
    return np.asarray(data["mean"], dtype=float), np.asarray(data["scale"], dtype=float)


def _fit_scaler(values: np.ndarray):
    scaler = StandardScaler().fit(values)
    return scaler.mean_.copy(), scaler.scale_.copy()


@dataclass
class TrainResult:
    """Outcome of `train`: the parameters and the training history."""

    params: ModelParameters
    losses: list[float] = field(default_factory=list)
    multipliers: Optional[np.ndarray] = None
    multiplier_history: list[np.ndarray] = field(default_factory=list)


class Adam:
    """Adam optimiser updating a dict of arrays in place."""

    def __init__(
        self,
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ):
        """Initialise the optimiser with its step size and moment decay rates."""
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.first_moments = {}
        self.second_moments = {}
        self.n_steps = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        """Apply one update to every array in `params`."""
        self.n_steps += 1
        bias_correction1 = 1.0 - self.beta1**self.n_steps
        bias_correction2 = 1.0 - self.beta2**self.n_steps
        for name, grad in grads.items():
            first = self.first_moments.setdefault(name, np.zeros_like(grad))
            second = self.second_moments.setdefault(name, np.zeros_like(grad))
            first *= self.beta1
            first += (1.0 - self.beta1) * grad
            second *= self.beta2
            second += (1.0 - self.beta2) * grad * grad
            params[name] -= (
                self.lr
                * (first / bias_correction1)
                / (np.sqrt(second / bias_correction2) + self.epsilon)
            )


#####################
# Forward/back prop #
#####################
def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def _init_arrays(rng, variant: str, k: int, n: int, cfg: TrainConfig):
    arrays = {}
    fan_in = k
    for layer in range(cfg.encoder_layers):
        arrays[f"encoder_w{layer}"] = _glorot(rng, fan_in, cfg.hidden)
        arrays[f"encoder_b{layer}"] = np.zeros(cfg.hidden)
        fan_in = cfg.hidden
    arrays["head_w"] = _glorot(rng, cfg.hidden, n)
    arrays["head_b"] = np.zeros(n)
    if variant == "hcr":
        arrays["radius_w"] = _glorot(rng, cfg.hidden, 1)
        arrays["radius_b"] = np.zeros(1)
    return arrays


def _encode(params: ModelParameters, inputs: np.ndarray) -> list[np.ndarray]:
    """Return the activations of every encoder layer, inputs first."""
    activations = [inputs]
    for layer in range(params.n_layers):
        hidden = (
            activations[-1] @ params.arrays[f"encoder_w{layer}"]
            + params.arrays[f"encoder_b{layer}"]
        )
        if params.activation == "tanh":
            hidden = np.tanh(hidden)
        activations.append(hidden)
    return activations


def _encoder_grads(params: ModelParameters, activations, grad_hidden, grads: dict):
    for layer in reversed(range(params.n_layers)):
        if params.activation == "tanh":
            grad_hidden = grad_hidden * (1.0 - activations[layer + 1] ** 2)
        grads[f"encoder_w{layer}"] = activations[layer].T @ grad_hidden
        grads[f"encoder_b{layer}"] = grad_hidden.sum(axis=0)
        if layer > 0:
            grad_hidden = grad_hidden @ params.arrays[f"encoder_w{layer}"].T


def _heads(params: ModelParameters, hidden: np.ndarray):
    """Return the raw head outputs: (values,) or (direction logits, radius logits)."""
    head = hidden @ params.arrays["head_w"] + params.arrays["head_b"]
    if params.variant != "hcr":
        return (head,)
    radius_logit = hidden @ params.arrays["radius_w"] + params.arrays["radius_b"]
    return head, radius_logit[:, 0]


def _row_norms(values: np.ndarray):
    return np.maximum(np.linalg.norm(values, axis=1, keepdims=True), 1e-12)


def _hcr_outputs(direction_logits: np.ndarray, radius_logits: np.ndarray):
    directions = direction_logits / _row_norms(direction_logits)
    return np.column_stack([directions, expit(radius_logits)])


def _destandardize(values: np.ndarray, scaler):
    if scaler is None:
        return values
    mean, scale = scaler
    return values * scale + mean


def _standardize(values: np.ndarray, scaler):
    if scaler is None:
        return values
    mean, scale = scaler
    return (values - mean) / scale


def _loss_and_grads(
    params: ModelParameters,
    inputs: np.ndarray,
    targets: np.ndarray,
    region: FeasibleRegion,
    multipliers: Optional[np.ndarray],
):
    activations = _encode(params, inputs)
    hidden = activations[-1]
    heads = _heads(params, hidden)
    outputs = heads[0] if params.variant != "hcr" else _hcr_outputs(*heads)

    residuals = outputs - targets
    loss = float(np.mean(residuals**2))
    grad_outputs = 2.0 * residuals / residuals.size

    if multipliers is not None and np.any(multipliers > 0):
        predictions = _destandardize(outputs, params.target_scaler)
        loss += float(multipliers @ region.mean_violations(predictions))
        grad_predictions = region.weighted_violation_gradient(predictions, multipliers)
        grad_predictions /= predictions.shape[0]
        if params.target_scaler is not None:
            grad_predictions = grad_predictions * params.target_scaler[1]
        grad_outputs = grad_outputs + grad_predictions

    grads = {}
    if params.variant == "hcr":
        direction_logits, radius_logits = heads
        norms = _row_norms(direction_logits)
        directions = direction_logits / norms
        grad_directions = grad_outputs[:, :-1]
        # Backprop through v -> v / ||v||
        grad_logits = (
            grad_directions
            - directions * np.sum(directions * grad_directions, axis=1, keepdims=True)
        ) / norms
        radii = outputs[:, -1]
        grad_radius_logits = (grad_outputs[:, -1] * radii * (1.0 - radii))[:, None]
        grads["radius_w"] = hidden.T @ grad_radius_logits
        grads["radius_b"] = grad_radius_logits.sum(axis=0)
        grad_hidden = grad_radius_logits @ params.arrays["radius_w"].T
    else:
        grad_logits = grad_outputs
        grad_hidden = 0.0

    grads["head_w"] = hidden.T @ grad_logits
    grads["head_b"] = grad_logits.sum(axis=0)
    grad_hidden = grad_hidden + grad_logits @ params.arrays["head_w"].T
    _encoder_grads(params, activations, grad_hidden, grads)
    return loss, grads


def _raw_outputs(params: ModelParameters, inputs: np.ndarray) -> np.ndarray:
    """Return de-standardised point predictions, or (d, r) rows for hcr."""
    hidden = _encode(params, _standardize(inputs, params.input_scaler))[-1]
    heads = _heads(params, hidden)
    if params.variant == "hcr":
        direction_logits, radius_logits = heads
        return np.column_stack([direction_logits, expit(radius_logits)])
    return _destandardize(heads[0], params.target_scaler)


##############
# Public API #
##############
def train(
    variant: Variant,
    data,
    region: FeasibleRegion,
    cfg: TrainConfig = TrainConfig(),
    lag: Optional[LagrangianConfig] = None,
) -> TrainResult:
    """Train a model of the given variant on `data`.

    Args:
        variant (str): One of `VARIANTS`.
        data (Dataset): Training inputs (N x k) and targets (N x n).
        region (FeasibleRegion): Region the targets (and predictions) live in.
        cfg (TrainConfig): Optimisation and architecture options.
        lag (LagrangianConfig): Multipliers and dual ascent options of the lagrangian
            variant. Ignored by the other variants.

    Returns:
        TrainResult: The trained parameters and the training history.

    Raises:
        InfeasibleTargetsError: If the hcr variant gets targets outside the region.
        NonFiniteLossError: If the loss becomes NaN or infinite.
    """
    if variant not in VARIANTS:
        raise ValueError(f"Unknown variant {variant!r}. Use one of {VARIANTS}")
    inputs = np.asarray(data.inputs, dtype=float)
    targets = np.asarray(data.targets, dtype=float)
    if targets.shape[1] != region.n:
        raise DimensionMismatchError(
            f"Targets have dimension {targets.shape[1]}, region has dimension {region.n}"
        )

    input_scaler = _fit_scaler(inputs) if cfg.standardize_inputs else None
    target_scaler = None
    if variant == "hcr":
        violations = region.evaluate_batch(targets) > region.tol_feas
        infeasible = np.flatnonzero(np.any(violations, axis=1))
        if infeasible.size:
            raise InfeasibleTargetsError(
                f"{infeasible.size} of {targets.shape[0]} targets are outside the region "
                f"(first row {infeasible[0]}). Project them first."
            )
        directions, radii = to_hyperspherical_batch(region, targets)
        fit_targets = np.column_stack([directions, radii])
    else:
        if cfg.standardize_targets:
            target_scaler = _fit_scaler(targets)
        fit_targets = _standardize(targets, target_scaler)

    rng = np.random.default_rng(cfg.seed)
    params = ModelParameters(
        variant=variant,
        arrays=_init_arrays(rng, variant, inputs.shape[1], region.n, cfg),
        activation=cfg.activation,
        input_scaler=input_scaler,
        target_scaler=target_scaler,
    )
    fit_inputs = _standardize(inputs, input_scaler)

    multipliers = None
    lag = lag or LagrangianConfig()
    if variant == "lagrangian":
        multipliers = np.zeros(region.m)
        if lag.multipliers is not None:
            multipliers = as_vector(lag.multipliers, region.m, name="multipliers").copy()

    optimizer = Adam(
        lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, epsilon=cfg.adam_epsilon
    )
    result = TrainResult(params=params)
    n_samples = inputs.shape[0]
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n_samples)
        batch_losses = []
        for start in range(0, n_samples, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            loss, grads = _loss_and_grads(
                params=params,
                inputs=fit_inputs[batch],
                targets=fit_targets[batch],
                region=region,
                multipliers=multipliers,
            )
            if not np.isfinite(loss):
                raise NonFiniteLossError(f"Loss became {loss} at epoch {epoch}")
            optimizer.step(params.arrays, grads)
            batch_losses.append(loss)
        result.losses.append(float(np.mean(batch_losses)))

        if multipliers is not None and epoch % lag.update_period == 0:
            violations = region.mean_violations(_raw_outputs(params, inputs))
            multipliers = np.maximum(0.0, multipliers + lag.step * violations)
            result.multiplier_history.append(multipliers.copy())

        if cfg.log_every and epoch % cfg.log_every == 0:
            logger.debug(
                "{} epoch {}/{}: loss={:.6g}",
                variant,
                epoch,
                cfg.epochs,
                result.losses[-1],
            )

    result.multipliers = multipliers
    return result


def _check_variant(variant: str, params: ModelParameters):
    if variant not in VARIANTS:
        raise ValueError(f"Unknown variant {variant!r}. Use one of {VARIANTS}")
    if (variant == "hcr") != (params.variant == "hcr"):
        raise ValueError(f"Cannot predict as {variant!r} with {params.variant!r} params")


def _postprocess(variant, region, raw, accel):
    """Return the final prediction and the time spent post-processing it."""
    if variant == "projection":
        with stopwatch() as elapsed:
            prediction = project(region, raw)
        return prediction, elapsed[0]
    if variant == "hcr":
        coord = HypersphericalCoord(
            direction=normalize_direction(raw[:-1]), radius=raw[-1]
        )
        with stopwatch() as elapsed:
            prediction = from_hyperspherical(region, coord, accel)
        return prediction, elapsed[0]
    return raw, None


def predict(
    variant: Variant,
    params: ModelParameters,
    region: FeasibleRegion,
    x,
    accel: AccelConfig = AccelConfig(),
):
    """Return the prediction for input x and the time spent post-processing it.

    The time is None for the simple and lagrangian variants, which do no
    post-processing.
    """
    _check_variant(variant, params)
    x = as_vector(x, params.k, name="input")
    raw = _raw_outputs(params, x[None, :])[0]
    return _postprocess(variant, region, raw, accel)


def predict_batch(
    variant: Variant,
    params: ModelParameters,
    region: FeasibleRegion,
    inputs,
    accel: AccelConfig = AccelConfig(),
):
    """Return the N x n predictions and the per-row post-processing times (or None)."""
    _check_variant(variant, params)
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim != 2 or inputs.shape[1] != params.k:
        raise DimensionMismatchError(
            f"Expected an N x {params.k} input array, got shape {inputs.shape}"
        )
    raw_outputs = _raw_outputs(params, inputs)
    if variant in ("simple", "lagrangian"):
        return raw_outputs, None

    predictions = np.empty((inputs.shape[0], region.n))
    times = np.empty(inputs.shape[0])
    for i_row, raw in enumerate(raw_outputs):
        predictions[i_row], times[i_row] = _postprocess(variant, region, raw, accel)
    return predictions, times
