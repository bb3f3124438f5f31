"""Bracketed scalar root finding for g(t) = c(O + t d) on t >= 0."""

import math
from dataclasses import dataclass
from typing import Callable

from loguru import logger
from scipy.optimize import brentq

from .configs import RootConfig
from .general_utils import (
    EscapeBoundExceededError,
    MaxIterExceededError,
    NoSignChangeError,
    NumericalError,
)

ScalarFunction = Callable[[float], float]


@dataclass(frozen=True)
class RootResult:
    """Result of a Brent root search.

    Attributes:
        root: The located root.
        iterations: Number of Brent iterations used.
        function_calls: Number of evaluations of the function.
    """

    root: float
    iterations: int
    function_calls: int


def _finite(value: float, t: float):
    value = float(value)
    if not math.isfinite(value):
        raise NumericalError(f"Function returned non-finite value {value} at t={t}")
    return value


def bracket_root(
    g: ScalarFunction, t_lo: float, t_hi: float, cfg: RootConfig = RootConfig()
):
    """Return a bracket (a, b) with g(a) < 0 <= g(b), doubling `t_hi` if needed.

    Args:
        g (Callable): Scalar function, negative at `t_lo`.
        t_lo (float): Lower end of the search interval.
        t_hi (float): Initial upper end. Must be positive and larger than `t_lo`.
        cfg (RootConfig): Provides the escape factor bounding the expansion.

    Returns:
        tuple[float, float]: The bracket. The lower end is always `t_lo`.

    Raises:
        ValueError: If the initial interval is invalid.
        NoSignChangeError: If g(t_lo) >= 0.
        EscapeBoundExceededError: If no sign change is found below the escape bound,
            i.e., the ray never leaves the region.
    """
    if not t_lo < t_hi:
        raise ValueError(f"Expected t_lo < t_hi, got ({t_lo}, {t_hi})")
    if t_hi <= 0:
        raise ValueError(f"Upper end must be positive to be doubled, got {t_hi}")

    if not _finite(g(t_lo), t_lo) < 0:
        raise NoSignChangeError(f"g(t_lo={t_lo}) must be negative")

    escape_bound = cfg.escape_factor * t_hi
    hi = float(t_hi)
    while _finite(g(hi), hi) < 0:
        hi *= 2.0
        if hi > escape_bound:
            raise EscapeBoundExceededError(
                f"No sign change up to t={escape_bound:.3g}: region unbounded along ray"
            )

    if hi != t_hi:
        logger.trace("Bracket expanded from {} to {}", t_hi, hi)
    return float(t_lo), hi


def brent_root_full(
    g: ScalarFunction, bracket: tuple[float, float], cfg: RootConfig = RootConfig()
):
    """Locate a root of `g` inside `bracket` with Brent's method.

    Returns:
        RootResult: The root and the solver's bookkeeping.

    Raises:
        NoSignChangeError: If g has the same strict sign at both ends of the bracket.
        MaxIterExceededError: If Brent's method does not converge in `cfg.max_iter`.
    """
    t_a, t_b = (float(t) for t in bracket)
    g_a, g_b = _finite(g(t_a), t_a), _finite(g(t_b), t_b)
    if g_a == 0:
        return RootResult(root=t_a, iterations=0, function_calls=2)
    if g_b == 0:
        return RootResult(root=t_b, iterations=0, function_calls=2)
    if (g_a < 0) == (g_b < 0):
        raise NoSignChangeError(
            f"g has the same sign at both ends of [{t_a}, {t_b}]: ({g_a}, {g_b})"
        )

    # Halving xtol keeps the root within abs_tol of the crossing once brentq's
    # relative term is added.
    root, info = brentq(
        g,
        t_a,
        t_b,
        xtol=0.5 * cfg.abs_tol,
        maxiter=cfg.max_iter,
        full_output=True,
        disp=False,
    )
    if not info.converged:
        raise MaxIterExceededError(
            f"Brent did not converge in {cfg.max_iter} iterations ({info.flag})"
        )
    return RootResult(
        root=float(root),
        iterations=int(info.iterations),
        function_calls=int(info.function_calls) + 2,
    )


def brent_root(
    g: ScalarFunction, bracket: tuple[float, float], cfg: RootConfig = RootConfig()
):
    """Return the root of `g` inside `bracket`. See `brent_root_full`."""
    return brent_root_full(g=g, bracket=bracket, cfg=cfg).root
