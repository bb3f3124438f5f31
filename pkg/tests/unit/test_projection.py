import itertools

import numpy as np
import pytest

from pyhcr.configs import DykstraConfig
from pyhcr.constraints import FeasibleRegion, GenericConvex, Halfspace
from pyhcr.general_utils import (
    DegenerateRegionError,
    InvalidConstraintError,
    NotConvergedError,
)
from pyhcr.hyperspherical import HypersphericalCoord, from_hyperspherical
from pyhcr.projection import (
    chebyshev_center,
    project,
    project_ball,
    project_polytope,
)


def _brute_force_projection(y, normals, offsets):
    """Closest feasible point among the projections onto all small active sets."""
    n_dims = normals.shape[1]
    best, best_distance = None, np.inf
    for size in range(1, n_dims + 1):
        for active in itertools.combinations(range(normals.shape[0]), size):
            rows = normals[list(active)]
            gram = rows @ rows.T
            if abs(np.linalg.det(gram)) < 1e-12:
                continue
            shift = np.linalg.solve(gram, rows @ y - offsets[list(active)])
            candidate = y - rows.T @ shift
            if np.all(normals @ candidate <= offsets + 1e-9):
                distance = np.linalg.norm(candidate - y)
                if distance < best_distance:
                    best, best_distance = candidate, distance
    return best


class TestProjectBall:
    @pytest.mark.parametrize(
        ("point", "expected"),
        [
            ([20.0, 0.0], [10.0, 0.0]),
            ([0.0, -30.0], [0.0, -10.0]),
            ([3.0, 4.0], [3.0, 4.0]),
        ],
    )
    def test_examples(self, point, expected):
        assert project_ball(point, [0.0, 0.0], 10.0) == pytest.approx(expected)

    def test_strict_margin(self):
        projected = project_ball([20.0, 0.0], [0.0, 0.0], 10.0, strict_margin=1e-9)
        assert projected[0] == pytest.approx(10.0 * (1 - 1e-9), rel=1e-12)
        assert projected[0] < 10.0

    def test_invalid_radius(self):
        with pytest.raises(InvalidConstraintError):
            project_ball([1.0], [0.0], 0.0)


class TestProjectPolytope:
    @pytest.mark.parametrize(
        ("point", "expected"),
        [
            ([2.0, 0.0], [1.0, 0.0]),
            ([2.0, 2.0], [1.0, 1.0]),
            ([-3.0, 0.5], [-1.0, 0.5]),
            ([0.2, 0.3], [0.2, 0.3]),
        ],
    )
    def test_box(self, box_region, point, expected):
        projected = project_polytope(point, box_region.constraints)
        assert projected == pytest.approx(expected, abs=1e-9)

    def test_accepts_arrays(self, box_region):
        projected = project_polytope([2.0, 2.0], box_region.halfspace_system())
        assert projected == pytest.approx([1.0, 1.0], abs=1e-9)

    def test_rejects_other_constraints(self, circle_region):
        with pytest.raises(InvalidConstraintError):
            project_polytope([20.0, 0.0], circle_region.constraints)

    def test_not_converged_keeps_last_iterate(self, box_region):
        with pytest.raises(NotConvergedError) as error:
            project_polytope(
                [2.0, 2.0], box_region.constraints, DykstraConfig(max_sweeps=1)
            )
        assert error.value.last_iterate == pytest.approx([1.0, 1.0])

    def test_matches_brute_force_on_random_instances(self):
        rng = np.random.default_rng(0)
        cfg = DykstraConfig(max_sweeps=100000, tol=1e-12)
        for _ in range(100):
            n_halfspaces = int(rng.integers(1, 7))
            normals = rng.standard_normal((n_halfspaces, 3))
            offsets = rng.uniform(0.1, 2.0, size=n_halfspaces)
            point = 3.0 * rng.standard_normal(3)
            projected = project_polytope(point, (normals, offsets), cfg)
            if np.all(normals @ point <= offsets):
                assert projected == pytest.approx(point)
                continue
            expected = _brute_force_projection(point, normals, offsets)
            assert np.linalg.norm(projected - expected) <= 1e-6


class TestProject:
    def test_feasible_point_is_returned_unchanged(self, box_region, circle_region):
        assert project(box_region, [0.5, -0.5]) == pytest.approx([0.5, -0.5])
        assert project(circle_region, [3.0, 4.0]) == pytest.approx([3.0, 4.0])

    def test_single_ball_is_pulled_strictly_inside(self, circle_region):
        projected = project(circle_region, [20.0, 0.0])
        assert projected == pytest.approx([10.0, 0.0])
        assert np.linalg.norm(projected) < 10.0

    def test_idempotent(self, box_region, circle_region):
        for region, point in ((box_region, [3.0, -2.0]), (circle_region, [0.0, 40.0])):
            once = project(region, point)
            assert project(region, once) == pytest.approx(once)

    def test_safeguards_unconverged_projection(self, box_region, caplog):
        projected = project(box_region, [2.0, 2.0], dykstra=DykstraConfig(max_sweeps=1))
        assert box_region.is_feasible(projected)
        assert projected == pytest.approx([1.0, 1.0])
        assert "Safeguarding" in caplog.text

    def test_generic_region(self):
        region = FeasibleRegion(
            constraints=[
                GenericConvex(evaluator=lambda y: float(y @ y) - 4.0, n_dims=2),
                Halfspace(normal=[1.0, 0.0], offset=1.0),
            ],
            origin=[0.0, 0.0],
        )
        rng = np.random.default_rng(1)
        for _ in range(10):
            projected = project(region, 5.0 * rng.standard_normal(2))
            assert region.is_feasible(projected)

    def test_polytope_projection_beats_sampled_feasible_points(self, polytope_region):
        rng = np.random.default_rng(2)
        samples = []
        for _ in range(1000):
            direction = rng.standard_normal(polytope_region.n)
            coord = HypersphericalCoord(
                direction=direction / np.linalg.norm(direction),
                radius=rng.uniform(),
            )
            samples.append(from_hyperspherical(polytope_region, coord))
        samples = np.array(samples)

        for _ in range(5):
            point = polytope_region.origin + 5.0 * rng.standard_normal(
                polytope_region.n
            )
            projected = project(polytope_region, point)
            assert polytope_region.is_feasible(projected)
            distance = np.linalg.norm(projected - point)
            closest_sample = np.min(np.linalg.norm(samples - point, axis=1))
            assert distance <= closest_sample + 1e-9


class TestChebyshevCenter:
    def test_box(self, box_region):
        center, radius = chebyshev_center(box_region.constraints)
        assert center == pytest.approx([0.0, 0.0], abs=1e-9)
        assert radius == pytest.approx(1.0)

    def test_shifted_box(self):
        region = FeasibleRegion.box(lower=[0.0, 0.0], upper=[4.0, 2.0])
        center, radius = chebyshev_center(region.halfspace_system())
        assert center[1] == pytest.approx(1.0)
        assert radius == pytest.approx(1.0)

    def test_flat_polytope(self):
        normals = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        offsets = np.array([1.0, -1.0, 1.0, 1.0])
        with pytest.raises(DegenerateRegionError):
            chebyshev_center((normals, offsets))
