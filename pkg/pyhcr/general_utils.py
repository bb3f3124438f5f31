"""General utility functions and classes."""

import time
from contextlib import contextmanager
from typing import Optional

import numpy as np


class HcrError(Exception):
    """Base class for the package's errors."""

    category = "general"
    exit_code = 1


class DimensionMismatchError(HcrError, ValueError):
    """Error raised when a point does not live in the expected space."""

    category = "input"
    exit_code = 2


class InvalidConstraintError(HcrError, ValueError):
    """Error raised when a constraint is built with invalid data."""

    category = "input"
    exit_code = 2


class InvalidCoordinateError(HcrError, ValueError):
    """Error raised when a hyperspherical coordinate breaks its invariants."""

    category = "input"
    exit_code = 2


class InfeasibleInputError(HcrError, ValueError):
    """Error raised when a point that must be feasible is not."""

    category = "input"
    exit_code = 2


class InfeasibleTargetsError(HcrError, ValueError):
    """Error raised when training targets must be feasible but some are not."""

    category = "input"
    exit_code = 2


class HcrIoError(HcrError, OSError):
    """Error raised when a file cannot be read or written."""

    category = "io"
    exit_code = 3


class ParseError(HcrError, ValueError):
    """Error raised when an input file has unparsable content."""

    category = "parse"
    exit_code = 4

    def __init__(self, message: str, line: Optional[int] = None):
        """Initialise the error, optionally pointing to the offending line."""
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class RegionError(HcrError):
    """Error raised when a feasible region is invalid."""

    category = "region"
    exit_code = 5


class InfeasibleOriginError(RegionError):
    """Error raised when the origin of a region is not strictly feasible."""


class DegenerateRegionError(RegionError):
    """Error raised when a region has an empty interior."""


class EscapeBoundExceededError(RegionError):
    """Error raised when a ray from the origin never leaves the region."""


class NumericalError(HcrError):
    """Error raised when a numerical procedure fails."""

    category = "numerical"
    exit_code = 6


class NoSignChangeError(NumericalError):
    """Error raised when a bracket does not contain a sign change."""


class MaxIterExceededError(NumericalError):
    """Error raised when an iterative solver runs out of iterations."""


class NotConvergedError(NumericalError):
    """Error raised when an iterative solver did not converge.

    The last iterate is kept in `last_iterate` so that callers may still use it.
    """

    def __init__(self, message: str, last_iterate: Optional[np.ndarray] = None):
        """Initialise the error with the solver's last iterate."""
        super().__init__(message)
        self.last_iterate = last_iterate


class NonFiniteLossError(NumericalError):
    """Error raised when training produces a non-finite loss."""


class FeasibilityViolationError(HcrError):
    """Error raised when a method that guarantees feasibility produced a violation."""

    category = "feasibility"
    exit_code = 7


def as_vector(values, dim: Optional[int] = None, name: str = "point"):
    """Return `values` as a 1D float array, checking its dimension if `dim` is given."""
    vector = np.asarray(values, dtype=float)
    if vector.ndim != 1:
        raise DimensionMismatchError(
            f"{name} must be a 1D vector, got shape {vector.shape}"
        )
    if dim is not None and vector.shape[0] != dim:
        raise DimensionMismatchError(
            f"{name} has dimension {vector.shape[0]}, expected {dim}"
        )
    return vector


@contextmanager
def stopwatch():
    """Measure the wall-clock time spent inside the `with` block.

    Yields a one-element list whose entry holds the elapsed seconds once the block
    exits.
    """
    elapsed = [0.0]
    start = time.perf_counter()
    try:
        yield elapsed
    finally:
        elapsed[0] = time.perf_counter() - start
