import json

import numpy as np
import pytest
from _pytest.logging import LogCaptureFixture
from loguru import logger

import pyhcr
from pyhcr.configs import SyntheticSpec, TimeSeriesSpec
from pyhcr.constraints import FeasibleRegion, Halfspace
from pyhcr.datagen import gen_synthetic_timeseries


@pytest.fixture()
def caplog(caplog: LogCaptureFixture):
    """Override the default `caplog` fixture to propagate Loguru to the caplog handler."""
    # Source: <https://loguru.readthedocs.io/en/stable/resources/migration.html
    #          #replacing-caplog-fixture-from-pytest-library>
    handler_id = logger.add(
        caplog.handler,
        format="{message}",
        level=0,
        filter=lambda record: record["level"].no >= caplog.handler.level,
        enqueue=False,  # Set to 'True' if your test is spawning child processes.
    )
    yield caplog
    logger.remove(handler_id)


# Register markers and constants
def pytest_configure(config):
    config.addinivalue_line(
        "markers", "full_scale: opt-in full-size benchmark (set HCR_FULL_SCALE=1)"
    )

    pytest.original_package_cache_directory = (
        pyhcr.GeneralDefinitions.PACKAGE_CACHE_DIRECTORY
    )


@pytest.fixture(autouse=True)
def _set_env(monkeypatch):
    # Keep benchmark runs in-process
    monkeypatch.setenv("HCR_THREADS", "1")


@pytest.fixture(autouse=True)
def _mocked_general_constants(tmp_path, mocker):
    mocker.patch("pyhcr.GeneralDefinitions.PACKAGE_CACHE_DIRECTORY", tmp_path / "cache")


##################
# Region fixtures #
##################
@pytest.fixture()
def circle_region():
    """Circle of radius 10 centred at the origin."""
    return FeasibleRegion.ball(center=[0.0, 0.0], radius=10.0)


@pytest.fixture()
def box_region():
    """The box [-1, 1]^2 as four halfspaces."""
    return FeasibleRegion.box(lower=[-1.0, -1.0], upper=[1.0, 1.0])


@pytest.fixture(scope="session")
def ball768_region():
    return FeasibleRegion.ball(center=np.zeros(768), radius=10.0)


@pytest.fixture(scope="session")
def timeseries_task():
    """A random-walk task with windows of size 48 (190 constraints)."""
    spec = TimeSeriesSpec(n=48, length=240, seed=0)
    return gen_synthetic_timeseries(n_series=1, spec=spec)[0]


@pytest.fixture(scope="session")
def polytope_region(timeseries_task):
    return timeseries_task.region


def _random_polytope(rng: np.random.Generator, n_dims: int, n_halfspaces: int):
    constraints = []
    for _ in range(n_halfspaces):
        normal = rng.standard_normal(n_dims)
        constraints.append(Halfspace(normal=normal, offset=rng.uniform(0.2, 2.0)))
    for axis in range(n_dims):
        unit = np.zeros(n_dims)
        unit[axis] = 1.0
        constraints.append(Halfspace(normal=unit, offset=3.0))
        constraints.append(Halfspace(normal=-unit, offset=3.0))
    return FeasibleRegion(constraints=constraints, origin=np.zeros(n_dims))


@pytest.fixture()
def random_polytope():
    """Factory of bounded polytopes strictly containing the origin.

    A box [-3, 3]^n keeps them bounded. The random halfspaces come first.
    """
    return _random_polytope


@pytest.fixture()
def region_file_factory(tmp_path):
    """Write a constraint-set dict to a JSON file and return its path."""

    def _write(data: dict, name: str = "region.json"):
        fpath = tmp_path / name
        fpath.write_text(json.dumps(data))
        return fpath

    return _write


@pytest.fixture()
def circle_region_file(region_file_factory):
    return region_file_factory(
        {
            "origin": [0.0, 0.0],
            "constraints": [{"kind": "ball", "center": [0.0, 0.0], "radius": 10.0}],
        },
        name="circle.json",
    )


@pytest.fixture()
def tiny_synthetic_spec():
    return SyntheticSpec(k=4, n=6, radius=10.0, n_train=30, n_test=30, seed=0)


@pytest.fixture()
def tiny_timeseries_spec():
    return TimeSeriesSpec(n=6, length=60, seed=0)
