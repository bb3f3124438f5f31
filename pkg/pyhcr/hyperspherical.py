"""Hyperspherical coordinates (d, r) of the points of a convex feasible region.

A feasible point y is written y = O + d r s(d), where O is the region's origin, d a
unit direction, r in [0, 1] and s(d) the distance from O to the region's frontier
along d.
"""

from dataclasses import dataclass

import numpy as np
from loguru import logger

from .configs import AccelConfig
from .constraints import FeasibleRegion
from .general_utils import InfeasibleInputError, InvalidCoordinateError, as_vector

UNIT_NORM_TOL = 1e-12
MIN_DIRECTION_NORM = 1e-12
# Radii up to this value skip the membership check on fixed-radius regions
_UNCHECKED_RADIUS = 1.0 - 1e-9


@dataclass(frozen=True, eq=False)
class HypersphericalCoord:
    """Point of a feasible region written as a unit direction and a radius in [0, 1]."""

    direction: np.ndarray
    radius: float

    def __post_init__(self):
        direction = as_vector(self.direction, name="direction").copy()
        radius = float(self.radius)
        if not np.all(np.isfinite(direction)):
            raise InvalidCoordinateError("Direction has non-finite entries")
        if abs(np.linalg.norm(direction) - 1.0) > UNIT_NORM_TOL:
            raise InvalidCoordinateError(
                f"Direction must have unit norm, got {np.linalg.norm(direction)}"
            )
        if not 0.0 <= radius <= 1.0:
            raise InvalidCoordinateError(f"Radius must lie in [0, 1], got {radius}")
        direction.flags.writeable = False
        object.__setattr__(self, "direction", direction)
        object.__setattr__(self, "radius", radius)

    @property
    def dim(self) -> int:
        """Dimension of the direction."""
        return self.direction.shape[0]

    def as_vector(self) -> np.ndarray:
        """Return the concatenation (d, r)."""
        return np.append(self.direction, self.radius)

    @classmethod
    def from_vector(cls, values):
        """Inverse of `as_vector`."""
        values = as_vector(values, name="coordinate")
        return cls(direction=values[:-1], radius=values[-1])


def _unit_vector(n_dims: int) -> np.ndarray:
    first = np.zeros(n_dims)
    first[0] = 1.0
    return first


def normalize_direction(v) -> np.ndarray:
    """Return v / ||v||, or the first basis vector when ||v|| <= 1e-12."""
    v = as_vector(v, name="direction")
    norm = np.linalg.norm(v)
    if not norm > MIN_DIRECTION_NORM:
        return _unit_vector(v.shape[0])
    return v / norm


def _checked_direction(region: FeasibleRegion, direction) -> np.ndarray:
    direction = as_vector(direction, region.n, name="direction")
    if abs(np.linalg.norm(direction) - 1.0) > UNIT_NORM_TOL:
        raise InvalidCoordinateError(
            f"Direction must have unit norm, got {np.linalg.norm(direction)}"
        )
    return direction


def restrict_constraints(
    region: FeasibleRegion, d, accel: AccelConfig = AccelConfig()
) -> list[int]:
    """Return the constraints violated at the first violating probe along d.

    Probes sit at O + d m_i with m_i = base_multiplier (1 + 0.5 i), i = 0, 1, ...
    The binding constraint of the ray is always among the returned indices. All
    indices are returned when no probe violates a constraint within
    `accel.max_iterations` probes.

    Args:
        region (FeasibleRegion): The feasible region.
        d (np.ndarray): Unit direction.
        accel (AccelConfig): Probe settings. The base multiplier defaults to the
            region's radial length.

    Returns:
        list[int]: Ascending constraint indices.
    """
    d = _checked_direction(region, d)
    base = accel.base_multiplier
    if base is None:
        base = region.radial_length
    for i_probe in range(accel.max_iterations):
        probe = region.origin + d * (base * (1.0 + 0.5 * i_probe))
        violated = region.violated_constraints(probe, tol=0.0)
        if violated:
            return violated
    logger.debug(
        "No violation after {} probes (base multiplier {}). Using all constraints.",
        accel.max_iterations,
        base,
    )
    return list(range(region.m))


def restricted_set_size(region: FeasibleRegion, d, accel: AccelConfig = AccelConfig()):
    """Return the number of constraints kept by `restrict_constraints`."""
    return len(restrict_constraints(region=region, d=d, accel=accel))


def frontier_distance_full_scan(region: FeasibleRegion, d):
    """Return (s(d), i) computing the crossings of all constraints."""
    return region.first_crossing(_checked_direction(region, d))


def frontier_distance(region: FeasibleRegion, d, accel: AccelConfig = AccelConfig()):
    """Return the frontier distance s(d) and the index of the binding constraint.

    Args:
        region (FeasibleRegion): The feasible region.
        d (np.ndarray): Unit direction.
        accel (AccelConfig): Options of the restrict-constraints acceleration.

    Returns:
        tuple[float, int]: s(d) > 0 and the lowest index achieving it.

    Raises:
        EscapeBoundExceededError: If the ray from the origin along d is unbounded.
    """
    if region.fixed_radius is not None:
        _checked_direction(region, d)
        return region.fixed_radius, 0
    candidates = restrict_constraints(region=region, d=d, accel=accel)
    return region.first_crossing(d, indices=candidates)


def to_hyperspherical(region: FeasibleRegion, y, accel: AccelConfig = AccelConfig()):
    """Return the hyperspherical coordinates of the feasible point y.

    The origin maps to (e_1, 0). The radius is clamped to [0, 1] to absorb root
    finder tolerance on frontier points.

    Raises:
        InfeasibleInputError: If y is not in the region.
    """
    y = as_vector(y, region.n)
    if not region.is_feasible(y):
        raise InfeasibleInputError(
            f"Point violates constraints {region.violated_constraints(y)}. "
            "Project it onto the region first."
        )
    offset = y - region.origin
    distance = np.linalg.norm(offset)
    if distance == 0:
        return HypersphericalCoord(direction=_unit_vector(region.n), radius=0.0)

    direction = offset / distance
    frontier, _ = frontier_distance(region=region, d=direction, accel=accel)
    return HypersphericalCoord(
        direction=direction, radius=float(np.clip(distance / frontier, 0.0, 1.0))
    )


def from_hyperspherical(
    region: FeasibleRegion, c: HypersphericalCoord, accel: AccelConfig = AccelConfig()
):
    """Return the feasible point O + d r s(d) represented by the coordinates c."""
    if c.dim != region.n:
        raise InvalidCoordinateError(
            f"Coordinate has dimension {c.dim}, region has dimension {region.n}"
        )
    if c.radius == 0:
        return region.origin.copy()

    closed_form_radius = region.closed_form_radius
    if closed_form_radius is not None and c.radius <= _UNCHECKED_RADIUS:
        return region.origin + (c.radius * closed_form_radius) * c.direction

    frontier, _ = frontier_distance(region=region, d=c.direction, accel=accel)
    return region.point_on_ray(c.direction, c.radius * frontier)


def to_hyperspherical_batch(
    region: FeasibleRegion, points, accel: AccelConfig = AccelConfig()
):
    """Return the directions (N x n) and radii (N,) of the rows of `points`."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    directions = np.empty_like(points)
    radii = np.empty(points.shape[0])
    for i_row, point in enumerate(points):
        coord = to_hyperspherical(region=region, y=point, accel=accel)
        directions[i_row], radii[i_row] = coord.direction, coord.radius
    return directions, radii


def from_hyperspherical_batch(
    region: FeasibleRegion, directions, radii, accel: AccelConfig = AccelConfig()
):
    """Return the N x n points represented by the rows of `directions` and `radii`."""
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    radii = np.asarray(radii, dtype=float).reshape(-1)
    if radii.shape[0] != directions.shape[0]:
        raise InvalidCoordinateError(
            f"Got {directions.shape[0]} directions but {radii.shape[0]} radii"
        )
    return np.array(
        [
            from_hyperspherical(
                region=region,
                c=HypersphericalCoord(direction=direction, radius=radius),
                accel=accel,
            )
            for direction, radius in zip(directions, radii)
        ]
    ).reshape(directions.shape)
