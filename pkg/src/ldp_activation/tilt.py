"""Tilting equation and Fenchel-Legendre rate values.

Given a scaled cumulant function psi (one n-th of the log moment
generating function of the total) the tilting parameter solves
psi'(theta) = a.  Because psi' is nondecreasing (psi is convex) the root
is found by safeguarded Newton iteration inside an expanding bracket;
bisection takes over whenever a Newton step leaves the bracket or the
local curvature is too small to trust.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .errors import BelowMeanError, DomainError, SaturationError

#: Relative tolerance on the tilting equation |psi'(theta) - a|.
TILT_TOL = 1e-10
#: Maximum solver iterations.
MAX_ITER = 200
#: Initial bracket ceiling and hard cap for saturation probing.
THETA_MAX = 50.0
THETA_CAP = 400.0


@dataclass(frozen=True)
class CumulantFunction:
    """Callable triple (psi, psi', psi''), finite for all finite theta."""

    psi: Callable[[float], float]
    dpsi: Callable[[float], float]
    d2psi: Callable[[float], float]


@dataclass(frozen=True)
class TiltSolution:
    """Solution of the tilting equation at threshold slope ``a``.

    ``rate`` is the Fenchel-Legendre value a*theta - psi(theta) and
    ``sigma2`` the tilted variance psi''(theta).
    """

    theta: float
    sigma2: float
    rate: float
    a: float
    iterations: int


def legendre_value(cumulant: CumulantFunction, a: float, theta: float) -> float:
    """a*theta - psi(theta); equals the rate at the tilting parameter."""
    return a * theta - cumulant.psi(theta)


def solve_tilt(
    cumulant: CumulantFunction,
    a: float,
    bracket_hint: float | None = None,
    *,
    tol: float = TILT_TOL,
    max_iter: int = MAX_ITER,
    theta_max: float = THETA_MAX,
    theta_cap: float = THETA_CAP,
) -> TiltSolution:
    """Solve psi'(theta) = a for theta > 0.

    Requires psi'(0) < a; the essential-supremum side is checked by
    probing psi' at ``theta_max`` and doubling up to ``theta_cap`` before
    declaring saturation (bounded supports make psi' plateau there).
    """
    if not math.isfinite(a):
        raise DomainError("threshold slope a must be finite")
    mean0 = cumulant.dpsi(0.0)
    if a <= mean0:
        raise BelowMeanError(a, mean0)
    tol_eq = tol * max(1.0, abs(a))

    hi = theta_max
    f_hi = cumulant.dpsi(hi) - a
    while f_hi <= 0.0 and hi < theta_cap:
        hi = min(2.0 * hi, theta_cap)
        f_hi = cumulant.dpsi(hi) - a
    if f_hi <= 0.0:
        raise SaturationError(a, cumulant.dpsi(hi), hi)

    lo = 0.0
    theta = bracket_hint if bracket_hint is not None and 0.0 < bracket_hint < hi else 0.5 * hi
    iterations = 0
    f = cumulant.dpsi(theta) - a
    while abs(f) > tol_eq and iterations < max_iter:
        iterations += 1
        if f > 0.0:
            hi = theta
        else:
            lo = theta
        curv = cumulant.d2psi(theta)
        if curv > 0.0 and math.isfinite(curv):
            step = f / curv
            candidate = theta - step
        else:
            candidate = math.nan
        if not (lo < candidate < hi):
            candidate = 0.5 * (lo + hi)
        if candidate == theta:  # bracket exhausted to rounding
            break
        theta = candidate
        f = cumulant.dpsi(theta) - a

    if abs(f) > tol_eq and (hi - lo) > 1e-13 * max(1.0, hi):
        raise DomainError(
            f"tilting equation did not converge: residual {f!r} after "
            f"{iterations} iterations"
        )
    rate = max(legendre_value(cumulant, a, theta), 0.0)
    sigma2 = cumulant.d2psi(theta)
    return TiltSolution(theta=theta, sigma2=sigma2, rate=rate, a=a,
                        iterations=iterations)
