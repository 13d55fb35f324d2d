"""Annealed (unconditional) activation probabilities.

The scaled cumulant of the total stimulation rate factorizes over the two
self blocks and the foreign term,

    psi(theta) = (n_c/n) ln M_c(q_n theta) + (n_v/n) ln M_v(q_n theta)
                 + (1/n) ln M(z_f theta),

with M_c, M_v the moment generating functions of the products Z^c W and
Z^v W and M that of W.  Tilting psi to the threshold slope a gives the
rate value I_n(a, z_f) and the tilted variance sigma_n^2, and the sharp
tail approximation

    P(G_n(z_f) >= a n) ~ exp(-n I_n) / (theta_n sigma_n sqrt(2 pi n)).

When the total lies on a lattice of span d (always the case for purely
atomic component laws with commensurable supports) the 1/theta factor of
the non-lattice theory is replaced by the geometric-sum factor
d * exp(-theta d h) / (1 - exp(-theta d)), where h in [0, 1) measures the
gap from the threshold up to the first reachable lattice point.  This
keeps the approximation honest on lattice instances and reduces smoothly
to 1/theta as d -> 0; the uncorrected value is kept in diagnostics.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .distributions import (
    BoundedDistribution,
    log_mgf,
    product_law,
    sum_lattice,
    _tilted_moments,
)
from .errors import DomainError, ValidityWarning
from .model import ModelParams, moments_annealed
from .tilt import CumulantFunction, TiltSolution, solve_tilt

#: Below this value of theta*sqrt(n) the sharp asymptotics are unreliable.
VALIDITY_THETA_SQRT_N = 3.0


@dataclass(frozen=True)
class ActivationEstimate:
    """A probability value with method tag and diagnostics."""

    value: float
    method: str
    std_error: float = 0.0
    diagnostics: dict = field(default_factory=dict)
    warnings: tuple[str, ...] = ()


def sharp_log_prefactor(
    theta: float,
    sigma2: float,
    n: int,
    threshold: float,
    lattice: tuple[float, float] | None,
) -> tuple[float, float]:
    """(log prefactor, log of the lattice correction vs 1/theta).

    ``lattice`` is (span, origin) of the total-sum lattice or None.
    """
    if sigma2 <= 0.0:
        raise DomainError("tilted variance must be positive for the sharp prefactor")
    base = -0.5 * math.log(2.0 * math.pi * n * sigma2)
    cont = -math.log(theta)
    if lattice is None or lattice[0] <= 0.0:
        return base + cont, 0.0
    span, origin = lattice
    k = math.ceil((threshold - origin) / span - 1e-9 / span)
    first = origin + k * span
    h = min(max((first - threshold) / span, 0.0), 1.0)
    latt = math.log(span) - math.log(-math.expm1(-theta * span)) - theta * span * h
    return base + latt, latt - cont


def build_estimate(
    n: int,
    sol: TiltSolution,
    threshold: float,
    lattice: tuple[float, float] | None,
    method: str,
    extra_diagnostics: dict | None = None,
    extra_warnings: tuple[str, ...] = (),
) -> ActivationEstimate:
    """Assemble the sharp estimate exp(-n I)/prefactor with validity notes."""
    log_pref, latt_corr = sharp_log_prefactor(sol.theta, sol.sigma2, n, threshold, lattice)
    log_p = -n * sol.rate + log_pref
    raw = math.exp(log_p)
    warns: list[str] = list(extra_warnings)
    t_sqrt_n = sol.theta * math.sqrt(n)
    if t_sqrt_n < VALIDITY_THETA_SQRT_N:
        warns.append(
            f"theta*sqrt(n)={t_sqrt_n:.3g} < {VALIDITY_THETA_SQRT_N}: threshold is too "
            "close to the mean for the sharp asymptotics to be reliable"
        )
    value = raw
    if raw > 1.0:
        warns.append(f"raw approximation {raw:.6g} exceeds 1; clamped")
        value = 1.0
    diag = {
        "theta": sol.theta,
        "sigma2": sol.sigma2,
        "rate": sol.rate,
        "n": n,
        "threshold": threshold,
        "log_probability": log_p,
        "theta_sqrt_n": t_sqrt_n,
        "lattice_span": None if lattice is None else lattice[0],
        "lattice_log_correction": latt_corr,
        "raw_value": raw,
        "iterations": sol.iterations,
    }
    if extra_diagnostics:
        diag.update(extra_diagnostics)
    return ActivationEstimate(value=value, method=method, diagnostics=diag,
                              warnings=tuple(warns))


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def _memoized_triple(evaluate):
    """Wrap an (psi, dpsi, d2psi) evaluator with a one-slot memo on theta.

    The tilt solver asks for all three pieces at the same theta; computing
    them together halves the dominant cost.
    """
    cache: dict = {"theta": None, "value": None}

    def lookup(theta: float):
        if cache["theta"] != theta:
            cache["value"] = evaluate(float(theta))
            cache["theta"] = theta
        return cache["value"]

    return CumulantFunction(
        psi=lambda th: lookup(th)[0],
        dpsi=lambda th: lookup(th)[1],
        d2psi=lambda th: lookup(th)[2],
    )


@dataclass(frozen=True, eq=False)
class AnnealedAssembly:
    """Cumulant of G_n(z_f)/n together with lattice/validity bookkeeping."""

    params: ModelParams
    cumulant: CumulantFunction
    n: int
    mean: float                       # E[G_n(z_f)]
    lattice: tuple[float, float] | None
    notes: tuple[str, ...] = ()


def assemble_annealed(params: ModelParams) -> AnnealedAssembly:
    n, q, z_f = params.n, params.q_n, params.z_f
    xc = product_law(params.law_Zc, params.law_W)
    xv = product_law(params.law_Zv, params.law_W)
    w = params.law_W
    wc, wv = params.n_c / n, params.n_v / n

    def evaluate(theta: float):
        psi = wc * log_mgf(xc, q * theta) + wv * log_mgf(xv, q * theta)
        mc, vc = _tilted_moments(xc, q * theta)
        mv, vv = _tilted_moments(xv, q * theta)
        dpsi = q * (wc * mc + wv * mv)
        d2 = q * q * (wc * vc + wv * vv)
        if z_f > 0.0:
            psi += log_mgf(w, z_f * theta) / n
            mw, vw = _tilted_moments(w, z_f * theta)
            dpsi += z_f * mw / n
            d2 += z_f * z_f * vw / n
        return psi, dpsi, d2

    summands = [(q * xc.support, params.n_c), (q * xv.support, params.n_v)]
    if z_f > 0.0:
        summands.append((z_f * w.support, 1))
    all_discrete = xc.kind == "discrete" and xv.kind == "discrete" and (
        z_f == 0.0 or w.kind == "discrete")
    lattice = sum_lattice(summands) if all_discrete else None

    notes = []
    degenerate = [name for name, law in (("Z^c*W", xc), ("Z^v*W", xv), ("W", w))
                  if law.is_degenerate]
    latticed = [name for name, law in (("Z^c*W", xc), ("Z^v*W", xv), ("W", w))
                if not law.is_degenerate and law.kind == "discrete" and law.is_lattice]
    if degenerate:
        notes.append(f"degenerate summand law(s): {', '.join(degenerate)}")
    if latticed:
        notes.append(
            f"lattice-valued summand law(s) ({', '.join(latticed)}): the non-lattice "
            "hypotheses of the sharp asymptotics fail; span-corrected prefactor in use"
        )
    return AnnealedAssembly(
        params=params,
        cumulant=_memoized_triple(evaluate),
        n=n,
        mean=params.n_M * w.mean,
        lattice=lattice,
        notes=tuple(notes),
    )


# ---------------------------------------------------------------------------
# rate, probability, ratio
# ---------------------------------------------------------------------------

def rate_annealed(params: ModelParams, a: float,
                  assembly: AnnealedAssembly | None = None) -> TiltSolution:
    """Tilting solution for the annealed cumulant at threshold slope a."""
    assembly = assembly or assemble_annealed(params)
    return solve_tilt(assembly.cumulant, a)


def probability_annealed(params: ModelParams, a: float) -> ActivationEstimate:
    """Sharp approximation of P(G_n(z_f) >= a n)."""
    assembly = assemble_annealed(params)
    sol = rate_annealed(params, a, assembly)
    return build_estimate(
        assembly.n, sol, a * assembly.n, assembly.lattice,
        method="sharp-annealed",
        extra_diagnostics={"z_f": params.z_f, "q_n": params.q_n},
        extra_warnings=assembly.notes,
    )


def ratio_annealed(params: ModelParams, a: float, z_f: float) -> float:
    """Asymptotic ratio P(G_n(z_f) >= an) / P(G_n(0) >= an).

    Equals exp(theta_n(a, 0) * z_f * (L - a n / n_M)) with L the essential
    supremum of the stimulation-rate law; valid when z_f is large compared
    to sqrt(n) (yet small compared to n), so that the foreign tilted mean
    has saturated at L.
    """
    n = params.n
    if 0.0 < z_f < 2.0 * math.sqrt(n):
        warnings.warn(
            f"ratio requested at z_f={z_f:g} < 2*sqrt(n)={2*math.sqrt(n):.3g}; the "
            "saturation argument behind the closed-form ratio assumes z_f >> sqrt(n)",
            ValidityWarning, stacklevel=2,
        )
    sol = rate_annealed(params.with_z_f(0.0), a)
    L = params.law_W.upper
    return math.exp(sol.theta * z_f * (L - a * n / params.n_M))
