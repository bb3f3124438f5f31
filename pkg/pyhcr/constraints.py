"""Convex scalar constraints and the feasible region they define."""

import json
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Callable, ClassVar, Optional, Sequence

import numpy as np
from loguru import logger
from scipy.optimize import approx_fprime

from .configs import RootConfig
from .general_utils import (
    DimensionMismatchError,
    EscapeBoundExceededError,
    HcrIoError,
    InfeasibleOriginError,
    InvalidConstraintError,
    NumericalError,
    ParseError,
    RegionError,
    as_vector,
)
from .rootfind import bracket_root, brent_root

DEFAULT_TOL_FEAS = 1e-12
DEFAULT_STRICT_MARGIN = 1e-9


def _frozen_vector(values, name: str):
    vector = as_vector(values, name=name).copy()
    if not np.all(np.isfinite(vector)):
        raise InvalidConstraintError(f"{name} has non-finite entries")
    vector.flags.writeable = False
    return vector


@dataclass(frozen=True, eq=False)
class ConstraintFunction(ABC):
    """A convex scalar constraint c(y) <= 0 on the output space.

    `index` is the position of the constraint in its region and is assigned by
    `FeasibleRegion`.
    """

    kind: ClassVar[str] = ""
    index: int = field(default=0, kw_only=True)

    @property
    @abstractmethod
    def dim(self) -> int:
        """Dimension of the space the constraint lives in."""

    @abstractmethod
    def _value(self, y: np.ndarray) -> float:
        """Return c(y) for a validated `y`."""

    @abstractmethod
    def gradient(self, y) -> np.ndarray:
        """Return a (sub)gradient of c at `y`."""

    @abstractmethod
    def crossing(self, origin, direction, t_hint: float = 1.0, cfg=RootConfig()):
        """Return the smallest t > 0 with c(origin + t direction) = 0 (inf if none)."""

    @abstractmethod
    def to_dict(self) -> dict:
        """Return the constraint in the constraint-set file schema."""

    def evaluate(self, y) -> float:
        """Return c(y); nonpositive values mean the constraint is satisfied."""
        return self._value(as_vector(y, self.dim))


@dataclass(frozen=True, eq=False)
class Ball(ConstraintFunction):
    """Constraint ||y - center||_2 - radius <= 0."""

    kind: ClassVar[str] = "ball"
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _frozen_vector(self.center, "center"))
        radius = float(self.radius)
        if not (math.isfinite(radius) and radius > 0):
            raise InvalidConstraintError(f"Ball radius must be positive, got {radius}")
        object.__setattr__(self, "radius", radius)

    @property
    def dim(self):
        return self.center.shape[0]

    def _value(self, y):
        return float(np.linalg.norm(y - self.center) - self.radius)

    def gradient(self, y):
        diff = as_vector(y, self.dim) - self.center
        norm = np.linalg.norm(diff)
        if norm == 0:
            return np.zeros(self.dim)
        return diff / norm

    def crossing(self, origin, direction, t_hint=1.0, cfg=RootConfig()):  # noqa: ARG002
        offset = as_vector(origin, self.dim) - self.center
        direction = as_vector(direction, self.dim)
        # Roots of a t^2 + 2 b t + c0 = 0
        a = float(direction @ direction)
        b = float(offset @ direction)
        c0 = float(offset @ offset) - self.radius**2
        disc = b * b - a * c0
        if a == 0 or disc < 0:
            return math.inf
        sq = math.sqrt(disc)
        if c0 < 0:
            return -c0 / (b + sq) if b > 0 else (sq - b) / a
        positive_roots = [t for t in ((-b - sq) / a, (-b + sq) / a) if t > 0]
        return min(positive_roots, default=math.inf)

    def to_dict(self):
        return {"kind": self.kind, "center": self.center.tolist(), "radius": self.radius}


@dataclass(frozen=True, eq=False)
class Halfspace(ConstraintFunction):
    """Constraint normal . y - offset <= 0."""

    kind: ClassVar[str] = "halfspace"
    normal: np.ndarray
    offset: float

    def __post_init__(self):
        normal = _frozen_vector(self.normal, "normal")
        if np.linalg.norm(normal) == 0:
            raise InvalidConstraintError("Halfspace normal must be nonzero")
        object.__setattr__(self, "normal", normal)
        offset = float(self.offset)
        if not math.isfinite(offset):
            raise InvalidConstraintError(f"Halfspace offset must be finite, got {offset}")
        object.__setattr__(self, "offset", offset)

    @property
    def dim(self):
        return self.normal.shape[0]

    def _value(self, y):
        return float(self.normal @ y - self.offset)

    def gradient(self, y):
        as_vector(y, self.dim)
        return self.normal.copy()

    def crossing(self, origin, direction, t_hint=1.0, cfg=RootConfig()):  # noqa: ARG002
        rate = float(self.normal @ as_vector(direction, self.dim))
        if rate <= 0:
            return math.inf
        slack = self.offset - float(self.normal @ as_vector(origin, self.dim))
        return slack / rate

    def to_dict(self):
        return {"kind": self.kind, "normal": self.normal.tolist(), "offset": self.offset}


@dataclass(frozen=True, eq=False)
class GenericConvex(ConstraintFunction):
    """Constraint given by an arbitrary scalar function.

    Convexity of `evaluator` is a contract of the caller and is not checked.
    """

    kind: ClassVar[str] = "generic"
    evaluator: Callable[[np.ndarray], float]
    n_dims: int
    gradient_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if not callable(self.evaluator):
            raise InvalidConstraintError("GenericConvex evaluator must be callable")
        if int(self.n_dims) < 1:
            raise InvalidConstraintError(f"Invalid dimension {self.n_dims}")

    @property
    def dim(self):
        return int(self.n_dims)

    def _value(self, y):
        value = float(self.evaluator(y))
        if not math.isfinite(value):
            raise NumericalError(f"Constraint {self.index} is not finite at {y}")
        return value

    def gradient(self, y):
        y = as_vector(y, self.dim)
        if self.gradient_fn is not None:
            return as_vector(self.gradient_fn(y), self.dim, name="gradient")
        step = math.sqrt(np.finfo(float).eps) * (1.0 + np.abs(y))
        return approx_fprime(y, self._value, step)

    def crossing(self, origin, direction, t_hint=1.0, cfg=RootConfig()):
        origin = as_vector(origin, self.dim)
        direction = as_vector(direction, self.dim)

        def along_ray(t):
            return self._value(origin + t * direction)

        return brent_root(along_ray, bracket_root(along_ray, 0.0, t_hint, cfg), cfg)

    def to_dict(self):
        raise InvalidConstraintError("Generic constraints cannot be serialised")


_CONSTRAINT_KINDS = {cls.kind: cls for cls in (Ball, Halfspace)}


def evaluate(constraint: ConstraintFunction, y) -> float:
    """Return c_i(y) for `constraint`."""
    return constraint.evaluate(y)


class FeasibleRegion:
    """Feasible region C(y) = AND_i (c_i(y) <= 0) with a strictly feasible origin O.

    Instances are immutable after construction. Halfspace and ball constraints are
    stacked so that membership queries are vectorised.
    """

    def __init__(
        self,
        constraints: Sequence[ConstraintFunction],
        origin,
        strict_margin: float = DEFAULT_STRICT_MARGIN,
        tol_feas: float = DEFAULT_TOL_FEAS,
        root_config: RootConfig = RootConfig(),
    ):
        """Initialise the region, checking that the origin is strictly feasible.

        Args:
            constraints: The constraints, in the order that fixes their indices.
            origin: The origin O. Must satisfy c_i(O) < 0 for all i.
            strict_margin: Relative margin used when strict interiority is needed.
            tol_feas: Tolerance used by membership queries.
            root_config: Root finder options for generic constraints.

        Raises:
            RegionError: If no constraint is given or tolerances are invalid.
            DimensionMismatchError: If constraints and origin disagree on dimension.
            InfeasibleOriginError: If the origin is not strictly feasible.
        """
        if len(constraints) == 0:
            raise RegionError("A region needs at least one constraint")
        if strict_margin < 0 or tol_feas < 0:
            raise RegionError("strict_margin and tol_feas must be nonnegative")

        self.origin = _frozen_vector(origin, "origin")
        self.strict_margin = float(strict_margin)
        self.tol_feas = float(tol_feas)
        self.root_config = root_config
        self.constraints = tuple(
            replace(constraint, index=i) for i, constraint in enumerate(constraints)
        )
        for constraint in self.constraints:
            if constraint.dim != self.n:
                raise DimensionMismatchError(
                    f"Constraint {constraint.index} has dimension {constraint.dim}, "
                    f"origin has dimension {self.n}"
                )
        self._stack_constraints()

        origin_values = self.evaluate_all(self.origin)
        not_strict = np.flatnonzero(origin_values >= 0)
        if not_strict.size:
            raise InfeasibleOriginError(
                f"Origin is not strictly feasible for constraints {not_strict.tolist()}"
            )

    def _stack_constraints(self):
        kinds = [c.kind for c in self.constraints]
        self._halfspace_idx = np.array(
            [i for i, kind in enumerate(kinds) if kind == Halfspace.kind], dtype=int
        )
        self._ball_idx = np.array(
            [i for i, kind in enumerate(kinds) if kind == Ball.kind], dtype=int
        )
        self._generic_idx = np.array(
            [i for i, kind in enumerate(kinds) if kind == GenericConvex.kind], dtype=int
        )

        self._normals = np.array(
            [self.constraints[i].normal for i in self._halfspace_idx]
        ).reshape(-1, self.n)
        self._offsets = np.array(
            [self.constraints[i].offset for i in self._halfspace_idx]
        )
        self._slacks = self._offsets - self._normals @ self.origin

        self._centers = np.array(
            [self.constraints[i].center for i in self._ball_idx]
        ).reshape(-1, self.n)
        self._radii = np.array([self.constraints[i].radius for i in self._ball_idx])
        self._ball_offsets = self.origin - self._centers
        self._ball_c0 = np.einsum("ij,ij->i", self._ball_offsets, self._ball_offsets)
        self._ball_c0 -= self._radii**2

        # Position of each constraint inside its kind's stack
        self._kind_codes = np.empty(self.m, dtype=int)
        self._positions = np.empty(self.m, dtype=int)
        for code, indices in enumerate(
            (self._halfspace_idx, self._ball_idx, self._generic_idx)
        ):
            self._kind_codes[indices] = code
            self._positions[indices] = np.arange(indices.size)

    @property
    def n(self) -> int:
        """Dimension of the output space."""
        return self.origin.shape[0]

    @property
    def m(self) -> int:
        """Number of constraints."""
        return len(self.constraints)

    @property
    def is_polytope(self) -> bool:
        """Whether every constraint is a halfspace."""
        return self._halfspace_idx.size == self.m

    @property
    def is_single_ball(self) -> bool:
        """Whether the region is a single ball."""
        return self.m == 1 and self._ball_idx.size == 1

    @cached_property
    def fixed_radius(self) -> Optional[float]:
        """Frontier distance shared by all directions, if the region has one.

        This is the case for a single ball centred at the origin.
        """
        if self.is_single_ball and np.array_equal(self._centers[0], self.origin):
            return float(self._radii[0])
        return None

    @cached_property
    def closed_form_radius(self) -> Optional[float]:
        """`fixed_radius` when O + t d, t < (1 - 1e-9) `fixed_radius`, needs no check.

        Rounding in O + t d is bounded by a few ulps of max(|O|, t), far below the
        1e-9 relative margin unless O is huge compared to the radius.
        """
        radius = self.fixed_radius
        if radius is None or np.linalg.norm(self.origin) > 1e6 * radius:
            return None
        return radius

    def evaluate_all(self, y) -> np.ndarray:
        """Return the vector (c_1(y), ..., c_m(y))."""
        y = as_vector(y, self.n)
        values = np.empty(self.m)
        if self._halfspace_idx.size:
            values[self._halfspace_idx] = self._normals @ y - self._offsets
        if self._ball_idx.size:
            diff = y - self._centers
            values[self._ball_idx] = np.sqrt(np.einsum("ij,ij->i", diff, diff))
            values[self._ball_idx] -= self._radii
        for i in self._generic_idx:
            values[i] = self.constraints[i].evaluate(y)
        return values

    def evaluate_batch(self, points) -> np.ndarray:
        """Return the N x m matrix of constraint values at the rows of `points`."""
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != self.n:
            raise DimensionMismatchError(
                f"Expected an N x {self.n} array of points, got shape {points.shape}"
            )
        values = np.empty((points.shape[0], self.m))
        if self._halfspace_idx.size:
            values[:, self._halfspace_idx] = points @ self._normals.T - self._offsets
        for pos, i in enumerate(self._ball_idx):
            values[:, i] = np.linalg.norm(points - self._centers[pos], axis=1)
            values[:, i] -= self._radii[pos]
        for i in self._generic_idx:
            values[:, i] = [self.constraints[i].evaluate(row) for row in points]
        return values

    def is_feasible(self, y, tol: Optional[float] = None) -> bool:
        """Return whether c_i(y) <= tol for all i (tol defaults to `tol_feas`)."""
        tol = self.tol_feas if tol is None else tol
        return bool(np.all(self.evaluate_all(y) <= tol))

    def violated_constraints(self, y, tol: Optional[float] = None) -> list[int]:
        """Return the ascending indices i with c_i(y) > tol (default `tol_feas`)."""
        tol = self.tol_feas if tol is None else tol
        return np.flatnonzero(self.evaluate_all(y) > tol).tolist()

    def mean_violations(self, points) -> np.ndarray:
        """Return, per constraint, the mean of max(0, c_i) over the rows of `points`."""
        return np.maximum(self.evaluate_batch(points), 0.0).mean(axis=0)

    def weighted_violation_gradient(self, points, weights) -> np.ndarray:
        """Return the rows' gradients of sum_i weights_i * max(0, c_i(y))."""
        points = np.asarray(points, dtype=float)
        weights = as_vector(weights, self.m, name="weights")
        values = self.evaluate_batch(points)
        active = (values > 0) * weights
        grads = np.zeros_like(points)
        if self._halfspace_idx.size:
            grads += active[:, self._halfspace_idx] @ self._normals
        for pos, i in enumerate(self._ball_idx):
            diff = points - self._centers[pos]
            norms = np.linalg.norm(diff, axis=1, keepdims=True)
            grads += active[:, [i]] * diff / np.where(norms > 0, norms, 1.0)
        for i in self._generic_idx:
            for row in np.flatnonzero(active[:, i]):
                grads[row] += active[row, i] * self.constraints[i].gradient(points[row])
        return grads

    def first_crossing(self, direction, indices: Optional[Sequence[int]] = None):
        """Return (t, i): the first constraint crossing along O + t d, t > 0.

        Only the constraints in `indices` (default: all) are considered. Ties go to the
        lowest index.

        Raises:
            EscapeBoundExceededError: If the ray never crosses a candidate constraint.
        """
        direction = as_vector(direction, self.n, name="direction")
        candidates = (
            np.arange(self.m) if indices is None else np.asarray(indices, dtype=int)
        )
        candidates = np.sort(candidates)
        crossings = np.full(candidates.size, math.inf)
        codes = self._kind_codes[candidates]
        positions = self._positions[candidates]

        is_half = codes == 0
        if is_half.any():
            rows = positions[is_half]
            rates = self._normals[rows] @ direction
            positive = rates > 0
            crossings[is_half] = np.where(
                positive, self._slacks[rows] / np.where(positive, rates, 1.0), math.inf
            )

        is_ball = codes == 1
        if is_ball.any():
            rows = positions[is_ball]
            a = float(direction @ direction)
            b = self._ball_offsets[rows] @ direction
            c0 = self._ball_c0[rows]
            sq = np.sqrt(b * b - a * c0)
            crossings[is_ball] = np.where(b > 0, -c0 / (b + sq), (sq - b) / a)

        is_generic = codes == 2
        if is_generic.any():
            crossings[is_generic] = self._generic_crossings(
                direction=direction,
                indices=candidates[is_generic],
                t_best=float(np.min(crossings)),
            )

        best = int(np.argmin(crossings))
        if not math.isfinite(crossings[best]):
            raise EscapeBoundExceededError(
                f"Ray along direction {direction} never leaves the region"
            )
        return float(crossings[best]), int(candidates[best])

    def _generic_crossings(self, direction, indices, t_best: float):
        """Crossings of generic constraints that can beat `t_best` (inf otherwise)."""
        rays = {
            i: (lambda t, c=self.constraints[i]: c.evaluate(self.origin + t * direction))
            for i in indices
        }
        if math.isfinite(t_best):
            upper = t_best
        else:

            def worst(t):
                return max(ray(t) for ray in rays.values())

            upper = bracket_root(worst, 0.0, self._generic_t_hint, self.root_config)[1]

        crossings = np.full(len(indices), math.inf)
        for pos, i in enumerate(indices):
            if rays[i](upper) < 0:
                continue
            crossings[pos] = brent_root(rays[i], (0.0, upper), self.root_config)
        return crossings

    @property
    def _generic_t_hint(self):
        return max(1.0, float(np.linalg.norm(self.origin)))

    @cached_property
    def radial_length(self) -> float:
        """Mean frontier distance along the 2n signed axis directions."""
        if self.fixed_radius is not None:
            return self.fixed_radius
        distances = []
        for axis in range(self.n):
            for sign in (1.0, -1.0):
                direction = np.zeros(self.n)
                direction[axis] = sign
                distances.append(self.first_crossing(direction)[0])
        radial_length = float(np.mean(distances))
        logger.debug("Estimated radial length of region: {}", radial_length)
        return radial_length

    def point_on_ray(self, direction, t: float) -> np.ndarray:
        """Return O + t d, pulled towards O if rounding puts it outside the region."""
        point = self.origin + t * direction
        if self.is_feasible(point):
            return point
        shrink = 4 * np.finfo(float).eps
        while shrink < 1:
            t *= 1.0 - shrink
            point = self.origin + t * direction
            if self.is_feasible(point):
                return point
            shrink *= 4
        logger.debug("Could not snap point on ray inside the region. Using the origin.")
        return self.origin.copy()

    def halfspace_system(self):
        """Return (A, b) such that the region is {y: A y <= b}.

        Raises:
            RegionError: If the region has non-halfspace constraints.
        """
        if not self.is_polytope:
            raise RegionError("Region is not a polytope")
        return self._normals.copy(), self._offsets.copy()

    ######################
    # Alternative inputs #
    ######################
    @classmethod
    def ball(cls, center, radius: float, origin=None, **kwargs):
        """Return the region made of a single ball (origin defaults to its centre)."""
        center = as_vector(center, name="center")
        origin = center if origin is None else origin
        return cls(
            constraints=[Ball(center=center, radius=radius)], origin=origin, **kwargs
        )

    @classmethod
    def box(cls, lower, upper, origin=None, **kwargs):
        """Return the box lower <= y <= upper as 2n halfspaces.

        Constraints come per axis, upper bound first: y_i <= u_i, -y_i <= -l_i.
        """
        lower, upper = as_vector(lower, name="lower"), as_vector(upper, name="upper")
        n_dims = lower.shape[0]
        as_vector(upper, n_dims, name="upper")
        constraints = []
        for axis in range(n_dims):
            unit = np.zeros(n_dims)
            unit[axis] = 1.0
            constraints.append(Halfspace(normal=unit, offset=upper[axis]))
            constraints.append(Halfspace(normal=-unit, offset=-lower[axis]))
        origin = 0.5 * (lower + upper) if origin is None else origin
        return cls(constraints=constraints, origin=origin, **kwargs)

    @classmethod
    def from_dict(cls, data: dict, **kwargs):
        """Return a region from the constraint-set schema.

        Schema: `{"origin": [...], "constraints": [{"kind": "ball", "center": [...],
        "radius": r} | {"kind": "halfspace", "normal": [...], "offset": b}]}` plus the
        optional keys `strict_margin` and `tol_feas`.
        """
        try:
            origin = data["origin"]
            raw_constraints = data["constraints"]
        except (KeyError, TypeError) as error:
            raise ParseError(f"Missing key in constraint set: {error}") from error

        constraints = []
        for i_raw, raw in enumerate(raw_constraints):
            try:
                constraint_cls = _CONSTRAINT_KINDS[raw["kind"]]
                params = {k: v for k, v in raw.items() if k != "kind"}
                constraints.append(constraint_cls(**params))
            except KeyError as error:
                raise ParseError(
                    f"Constraint #{i_raw}: unknown or missing kind {error}"
                ) from error
            except TypeError as error:
                raise ParseError(f"Constraint #{i_raw}: {error}") from error

        for key in ("strict_margin", "tol_feas"):
            if key in data:
                kwargs.setdefault(key, float(data[key]))
        return cls(constraints=constraints, origin=origin, **kwargs)

    @classmethod
    def from_file(cls, fpath: Path, **kwargs):
        """Return a region stored in a constraint-set JSON file."""
        try:
            with open(fpath, "r") as region_file:
                data = json.load(region_file)
        except json.JSONDecodeError as error:
            raise ParseError(f"{fpath}: {error.msg}", line=error.lineno) from error
        except OSError as error:
            raise HcrIoError(f"Cannot read constraint set {fpath}: {error}") from error
        return cls.from_dict(data, **kwargs)

    def to_dict(self) -> dict:
        """Return the region in the constraint-set schema."""
        return {
            "origin": self.origin.tolist(),
            "constraints": [constraint.to_dict() for constraint in self.constraints],
            "strict_margin": self.strict_margin,
            "tol_feas": self.tol_feas,
        }

    def export(self, fpath: Path):
        """Write the region to a constraint-set JSON file."""
        try:
            with open(fpath, "w") as region_file:
                json.dump(self.to_dict(), region_file, indent=2)
        except OSError as error:
            raise HcrIoError(f"Cannot write constraint set {fpath}: {error}") from error

    def __repr__(self):
        kinds = sorted({c.kind for c in self.constraints})
        return f"{type(self).__name__}(n={self.n}, m={self.m}, kinds={kinds})"


def is_feasible(region: FeasibleRegion, y, tol: Optional[float] = None) -> bool:
    """Return whether `y` satisfies every constraint of `region` up to `tol`."""
    return region.is_feasible(y, tol=tol)


def violated_constraints(
    region: FeasibleRegion, y, tol: Optional[float] = None
) -> list[int]:
    """Return the ascending indices of the constraints `y` violates."""
    return region.violated_constraints(y, tol=tol)
