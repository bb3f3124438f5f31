import json

import numpy as np
import pytest

from pyhcr.configs import LagrangianConfig, TrainConfig
from pyhcr.constraints import FeasibleRegion
from pyhcr.datagen import Dataset
from pyhcr.general_utils import (
    HcrIoError,
    InfeasibleTargetsError,
    NonFiniteLossError,
    ParseError,
)
from pyhcr.learner import (
    Adam,
    ModelParameters,
    _loss_and_grads,
    predict,
    predict_batch,
    train,
)


@pytest.fixture()
def box_dataset():
    rng = np.random.default_rng(0)
    inputs = rng.uniform(-1, 1, size=(40, 3))
    targets = np.tanh(inputs[:, :2] + 0.5 * inputs[:, 2:])
    return Dataset(inputs=inputs, targets=0.9 * targets)


@pytest.fixture()
def small_cfg():
    return TrainConfig(epochs=5, batch_size=8, lr=1e-2, hidden=8, seed=0)


def _perturbed(params: ModelParameters, rng, scale: float):
    arrays = {
        name: array + scale * rng.standard_normal(array.shape)
        for name, array in params.arrays.items()
    }
    return ModelParameters(
        variant=params.variant,
        arrays=arrays,
        activation=params.activation,
        input_scaler=params.input_scaler,
        target_scaler=params.target_scaler,
    )


def test_adam_first_step_moves_by_learning_rate():
    params = {"w": np.array([1.0, -1.0])}
    optimizer = Adam(lr=0.1)
    optimizer.step(params, {"w": np.array([2.0, -0.5])})
    assert params["w"] == pytest.approx([0.9, -0.9])
    assert optimizer.n_steps == 1


def test_hcr_memorises_single_pair(circle_region):
    data = Dataset(inputs=[[1.0]], targets=[[5.0, 0.0]])
    cfg = TrainConfig(epochs=3000, batch_size=1, lr=5e-3, hidden=8, seed=0)
    result = train("hcr", data, circle_region, cfg)
    prediction, elapsed = predict("hcr", result.params, circle_region, [1.0])
    assert prediction == pytest.approx([5.0, 0.0], abs=1e-2)
    assert elapsed >= 0
    assert result.losses[-1] < result.losses[0]


def test_simple_learns_linear_map():
    rng = np.random.default_rng(1)
    weights = rng.standard_normal((3, 4))
    inputs = rng.uniform(-1, 1, size=(64, 4))
    data = Dataset(inputs=inputs, targets=inputs @ weights.T)
    region = FeasibleRegion.ball(center=np.zeros(3), radius=1e3)
    cfg = TrainConfig(
        epochs=2000, batch_size=64, lr=1e-2, hidden=16, activation="identity"
    )
    params = train("simple", data, region, cfg).params
    predictions, times = predict_batch("simple", params, region, inputs)
    assert times is None
    mse = np.mean((predictions - data.targets) ** 2)
    assert mse < 1e-3 * np.var(data.targets)


def test_lagrangian_without_multipliers_equals_simple(box_region, box_dataset, small_cfg):
    simple = train("simple", box_dataset, box_region, small_cfg)
    lagrangian = train(
        "lagrangian", box_dataset, box_region, small_cfg, LagrangianConfig(step=0.0)
    )
    for name, array in simple.params.arrays.items():
        assert np.array_equal(array, lagrangian.params.arrays[name])
    assert simple.losses == lagrangian.losses
    assert np.all(lagrangian.multipliers == 0)


def test_dual_ascent_history(circle_region, small_cfg):
    rng = np.random.default_rng(2)
    inputs = rng.uniform(-1, 1, size=(32, 2))
    directions = inputs / np.linalg.norm(inputs, axis=1, keepdims=True)
    data = Dataset(inputs=inputs, targets=10.0 * (1 - 1e-9) * directions)
    cfg = small_cfg.model_copy(update={"epochs": 4})
    result = train(
        "lagrangian",
        data,
        circle_region,
        cfg,
        LagrangianConfig(multipliers=(0.5,), step=1.0, update_period=2),
    )
    assert len(result.multiplier_history) == 2
    assert all(np.all(lam >= 0.5) for lam in result.multiplier_history)
    assert result.multipliers.shape == (1,)


def test_training_is_deterministic(box_region, box_dataset, small_cfg):
    first = train("hcr", box_dataset, box_region, small_cfg)
    second = train("hcr", box_dataset, box_region, small_cfg)
    for name, array in first.params.arrays.items():
        assert np.array_equal(array, second.params.arrays[name])
    assert first.losses == second.losses


@pytest.mark.parametrize("region_name", ["box_region", "circle_region"])
def test_hcr_predictions_are_feasible_for_any_weights(request, region_name):
    region = request.getfixturevalue(region_name)
    rng = np.random.default_rng(3)
    inputs = rng.uniform(-1, 1, size=(20, 3))
    data = Dataset(inputs=inputs, targets=0.5 * rng.uniform(-1, 1, size=(20, 2)))
    params = train("hcr", data, region, TrainConfig(epochs=1, hidden=8)).params
    for scale in (0.0, 1.0, 100.0):
        predictions, _ = predict_batch(
            "hcr", _perturbed(params, rng, scale), region, 10.0 * inputs
        )
        assert all(region.is_feasible(point) for point in predictions)


def test_hcr_predictions_are_feasible_on_polytope(timeseries_task):
    region = timeseries_task.region
    cfg = TrainConfig(epochs=1, hidden=8, standardize_inputs=True)
    params = train("hcr", timeseries_task.train, region, cfg).params
    rng = np.random.default_rng(4)
    predictions, times = predict_batch(
        "hcr", _perturbed(params, rng, 10.0), region, timeseries_task.test.inputs
    )
    assert all(region.is_feasible(point) for point in predictions)
    assert np.all(times >= 0)


def test_projection_predictions_are_feasible(box_region, box_dataset, small_cfg):
    params = train("projection", box_dataset, box_region, small_cfg).params
    inputs = 5.0 * box_dataset.inputs
    predictions, times = predict_batch("projection", params, box_region, inputs)
    assert all(box_region.is_feasible(point) for point in predictions)
    assert times.shape == (len(inputs),)


def test_hcr_needs_feasible_targets(circle_region):
    data = Dataset(inputs=[[0.0], [1.0]], targets=[[5.0, 0.0], [20.0, 0.0]])
    with pytest.raises(InfeasibleTargetsError):
        train("hcr", data, circle_region, TrainConfig(epochs=1))
    train("simple", data, circle_region, TrainConfig(epochs=1))


def test_non_finite_loss_stops_training(mocker, box_region, box_dataset, small_cfg):
    mocker.patch("pyhcr.learner._loss_and_grads", return_value=(np.nan, {}))
    with pytest.raises(NonFiniteLossError):
        train("simple", box_dataset, box_region, small_cfg)


def test_unknown_variant(box_region, box_dataset):
    with pytest.raises(ValueError, match="Unknown variant"):
        train("ridge", box_dataset, box_region)


def test_variant_must_match_parameters(box_region, box_dataset, small_cfg):
    params = train("simple", box_dataset, box_region, small_cfg).params
    with pytest.raises(ValueError, match="Cannot predict"):
        predict("hcr", params, box_region, box_dataset.inputs[0])
    prediction, elapsed = predict("projection", params, box_region, [9.0, 9.0, 9.0])
    assert box_region.is_feasible(prediction)
    assert elapsed >= 0
    assert predict("lagrangian", params, box_region, box_dataset.inputs[0])[1] is None


@pytest.mark.parametrize("variant", ["simple", "lagrangian", "hcr"])
def test_gradients_match_finite_differences(variant):
    rng = np.random.default_rng(5)
    region = FeasibleRegion.ball(center=np.zeros(2), radius=0.3)
    inputs = rng.uniform(-1, 1, size=(6, 3))
    targets = 0.2 * rng.uniform(-1, 1, size=(6, 2))
    cfg = TrainConfig(epochs=1, hidden=5, encoder_layers=2)
    params = train(variant, Dataset(inputs=inputs, targets=targets), region, cfg).params
    params = _perturbed(params, rng, 0.5)

    fit_targets = rng.uniform(0.1, 0.9, size=(6, 3 if variant == "hcr" else 2))
    multipliers = np.array([2.0]) if variant == "lagrangian" else None

    def loss(arrays):
        candidate = ModelParameters(
            variant=variant,
            arrays=arrays,
            activation=params.activation,
            target_scaler=params.target_scaler,
        )
        return _loss_and_grads(candidate, inputs, fit_targets, region, multipliers)

    _, grads = loss(params.arrays)
    eps = 1e-6
    for name, array in params.arrays.items():
        for index in [(0,) * array.ndim, tuple(s - 1 for s in array.shape)]:
            shifted_up = {k: v.copy() for k, v in params.arrays.items()}
            shifted_down = {k: v.copy() for k, v in params.arrays.items()}
            shifted_up[name][index] += eps
            shifted_down[name][index] -= eps
            numerical = (loss(shifted_up)[0] - loss(shifted_down)[0]) / (2 * eps)
            assert grads[name][index] == pytest.approx(numerical, rel=1e-4, abs=1e-7)


class TestCheckpoints:
    def test_save_and_load(self, tmp_path, box_region, box_dataset):
        cfg = TrainConfig(epochs=2, hidden=8, standardize_inputs=True)
        params = train("simple", box_dataset, box_region, cfg).params
        fpath = tmp_path / "model.json"
        params.save(fpath)
        loaded = ModelParameters.load(fpath)
        assert loaded.shapes() == params.shapes()
        assert loaded.n_layers == 1
        assert (loaded.k, loaded.hidden, loaded.n) == (3, 8, 2)
        expected, _ = predict_batch("simple", params, box_region, box_dataset.inputs)
        actual, _ = predict_batch("simple", loaded, box_region, box_dataset.inputs)
        assert np.array_equal(actual, expected)

    def test_hcr_checkpoint_keeps_radius_head(self, tmp_path, box_region, box_dataset):
        params = train("hcr", box_dataset, box_region, TrainConfig(epochs=1)).params
        fpath = tmp_path / "hcr.json"
        params.save(fpath)
        loaded = ModelParameters.load(fpath)
        assert loaded.variant == "hcr"
        assert loaded.shapes()["radius_w"] == (128, 1)
        assert loaded.target_scaler is None

    def test_shape_header_is_checked(self, tmp_path, box_region, box_dataset):
        params = train("simple", box_dataset, box_region, TrainConfig(epochs=1)).params
        fpath = tmp_path / "model.json"
        params.save(fpath)
        data = json.loads(fpath.read_text())
        data["shapes"]["head_b"] = [99]
        fpath.write_text(json.dumps(data))
        with pytest.raises(ParseError, match="head_b"):
            ModelParameters.load(fpath)

    def test_invalid_files(self, tmp_path):
        with pytest.raises(HcrIoError):
            ModelParameters.load(tmp_path / "missing.json")
        fpath = tmp_path / "garbage.json"
        fpath.write_text("not json")
        with pytest.raises(ParseError):
            ModelParameters.load(fpath)
        fpath.write_text(json.dumps({"format": "something-else"}))
        with pytest.raises(ParseError):
            ModelParameters.load(fpath)
