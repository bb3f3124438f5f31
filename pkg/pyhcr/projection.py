"""Euclidean projection onto feasible regions."""

from typing import Sequence, Union

import numpy as np
from loguru import logger
from scipy.optimize import linprog

from .configs import DykstraConfig, SubgradientConfig
from .constraints import FeasibleRegion, Halfspace
from .general_utils import (
    DegenerateRegionError,
    InvalidConstraintError,
    NotConvergedError,
    RegionError,
    as_vector,
)
from .hyperspherical import normalize_direction


def project_ball(y, center, radius: float, strict_margin: float = 0.0) -> np.ndarray:
    """Return the projection of y onto the ball ||y - center|| <= radius.

    Points strictly inside are returned unchanged. Others are scaled radially onto the
    sphere of radius `radius * (1 - strict_margin)`.
    """
    y = as_vector(y)
    center = as_vector(center, y.shape[0], name="center")
    if not radius > 0:
        raise InvalidConstraintError(f"Ball radius must be positive, got {radius}")
    offset = y - center
    distance = np.linalg.norm(offset)
    if distance < radius:
        return y.copy()
    return center + offset * (radius * (1.0 - strict_margin) / distance)


def _halfspace_arrays(halfspaces):
    is_pair = isinstance(halfspaces, tuple) and len(halfspaces) == 2
    if is_pair and not isinstance(halfspaces[0], Halfspace):
        normals, offsets = halfspaces
        return np.atleast_2d(np.asarray(normals, float)), np.asarray(offsets, float)
    if not all(isinstance(h, Halfspace) for h in halfspaces):
        raise InvalidConstraintError("Polytope projection needs halfspace constraints")
    normals = np.array([h.normal for h in halfspaces])
    offsets = np.array([h.offset for h in halfspaces])
    return normals, offsets


def project_polytope(
    y,
    halfspaces: Union[Sequence[Halfspace], tuple[np.ndarray, np.ndarray]],
    cfg: DykstraConfig = DykstraConfig(),
) -> np.ndarray:
    """Project y onto the polytope {x: a_i . x <= b_i} with Dykstra's algorithm.

    Each sweep visits the halfspaces in order. A halfspace whose correction term is
    zero and which is satisfied by the current iterate leaves both untouched, so the
    sweep jumps straight to the next halfspace that can act.

    Args:
        y (np.ndarray): Point to project.
        halfspaces: `Halfspace` constraints, or a pair (A, b).
        cfg (DykstraConfig): Sweep cap and stopping tolerance.

    Returns:
        np.ndarray: The projection, within `cfg.tol` of the minimiser.

    Raises:
        NotConvergedError: After `cfg.max_sweeps` sweeps. The last iterate is attached.
    """
    normals, offsets = _halfspace_arrays(halfspaces)
    y = as_vector(y, normals.shape[1])
    n_halfspaces = normals.shape[0]
    squared_norms = np.einsum("ij,ij->i", normals, normals)

    point = y.copy()
    corrections = np.zeros_like(normals)
    has_correction = np.zeros(n_halfspaces, dtype=bool)
    for sweep in range(1, cfg.max_sweeps + 1):
        sweep_start = point.copy()
        i_half = 0
        while i_half < n_halfspaces:
            can_act = has_correction[i_half:] | (
                normals[i_half:] @ point > offsets[i_half:]
            )
            next_active = np.flatnonzero(can_act)
            if next_active.size == 0:
                break
            i_half += int(next_active[0])

            shifted = point + corrections[i_half]
            excess = normals[i_half] @ shifted - offsets[i_half]
            if excess > 0:
                point = shifted - (excess / squared_norms[i_half]) * normals[i_half]
            else:
                point = shifted
            corrections[i_half] = shifted - point
            has_correction[i_half] = excess > 0
            i_half += 1

        max_violation = float(np.max(normals @ point - offsets))
        if np.linalg.norm(point - sweep_start) <= cfg.tol and max_violation <= cfg.tol:
            logger.trace("Dykstra converged after {} sweeps", sweep)
            return point

    raise NotConvergedError(
        f"Dykstra did not converge in {cfg.max_sweeps} sweeps", last_iterate=point
    )


def project_generic(
    region: FeasibleRegion, y, cfg: SubgradientConfig = SubgradientConfig()
) -> np.ndarray:
    """Approximate the projection of y onto an arbitrary convex region.

    Iterates x_{k+1} = T(x_k + (y - x_k) / (k + 1)), where T applies a subgradient
    projection x - c_i(x) g_i / ||g_i||^2 for every constraint violated at x. For
    balls and halfspaces these are exact projections. The result is feasible up to the
    region's tolerance. Optimality is not guaranteed.

    Raises:
        NotConvergedError: After `cfg.max_iter` iterations. The last iterate is
            attached.
    """
    y = as_vector(y, region.n)
    point = y.copy()
    for k in range(1, cfg.max_iter + 1):
        previous = point
        point = point + (y - point) / (k + 1)
        for i_constraint in region.violated_constraints(point):
            constraint = region.constraints[i_constraint]
            value = constraint.evaluate(point)
            if value <= 0:
                continue
            grad = constraint.gradient(point)
            grad_sq = float(grad @ grad)
            if grad_sq > 0:
                point = point - (value / grad_sq) * grad
        if np.linalg.norm(point - previous) <= cfg.tol and region.is_feasible(point):
            return point
    raise NotConvergedError(
        f"Subgradient projection did not converge in {cfg.max_iter} iterations",
        last_iterate=point,
    )


def _radial_safeguard(region: FeasibleRegion, point: np.ndarray) -> np.ndarray:
    """Return `point` if feasible, else its pull towards O onto the frontier."""
    if region.is_feasible(point):
        return point
    offset = point - region.origin
    direction = normalize_direction(offset)
    frontier, _ = region.first_crossing(direction)
    return region.point_on_ray(direction, min(np.linalg.norm(offset), frontier))


def project(
    region: FeasibleRegion,
    y,
    dykstra: DykstraConfig = DykstraConfig(),
    subgradient: SubgradientConfig = SubgradientConfig(),
) -> np.ndarray:
    """Return a feasible point close to y, y itself if it is already feasible.

    Single balls are projected analytically (pulled `region.strict_margin` inside),
    polytopes with Dykstra's algorithm and other regions with `project_generic`. If
    the iterative solvers stop early, their last iterate is pulled radially towards
    the origin until feasible.
    """
    y = as_vector(y, region.n)
    if region.is_feasible(y):
        return y.copy()

    try:
        if region.is_single_ball:
            ball = region.constraints[0]
            point = project_ball(
                y, ball.center, ball.radius, strict_margin=region.strict_margin
            )
        elif region.is_polytope:
            point = project_polytope(y, region.halfspace_system(), cfg=dykstra)
        else:
            point = project_generic(region, y, cfg=subgradient)
    except NotConvergedError as error:
        logger.warning("{}. Safeguarding the last iterate.", error)
        point = error.last_iterate

    return _radial_safeguard(region, point)


def chebyshev_center(halfspaces):
    """Return the centre and radius of the largest ball inside a polytope.

    Args:
        halfspaces: `Halfspace` constraints, or a pair (A, b).

    Raises:
        RegionError: If the LP fails.
        DegenerateRegionError: If the polytope has an empty interior.
    """
    normals, offsets = _halfspace_arrays(halfspaces)
    n_dims = normals.shape[1]
    row_norms = np.linalg.norm(normals, axis=1)
    # Variables (c, rho): maximise rho s.t. a_i . c + rho ||a_i|| <= b_i
    objective = np.zeros(n_dims + 1)
    objective[-1] = -1.0
    result = linprog(
        objective,
        A_ub=np.column_stack([normals, row_norms]),
        b_ub=offsets,
        bounds=[(None, None)] * n_dims + [(0.0, None)],
        method="highs",
    )
    if not result.success:
        raise RegionError(f"Chebyshev centre LP failed: {result.message}")
    center, radius = result.x[:-1], float(result.x[-1])
    if radius <= 0:
        raise DegenerateRegionError("Polytope has an empty interior")
    return center, radius
