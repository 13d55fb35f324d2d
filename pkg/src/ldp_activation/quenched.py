"""Quenched activation probabilities and the fluctuation decomposition.

Two conditional regimes share one skeleton:

* kind "R" (receptor quenched): the stimulation rates W_j and W_f are
  fixed; each per-peptide conditional MGF averages over the copy-number
  law, ln M_j(theta) = ln E[exp(theta Z^gamma W_j)], and the foreign term
  is exactly theta z_f W_f.
* kind "Z" (presentation quenched): the copy numbers Z_j are fixed; each
  per-peptide conditional MGF averages over the stimulation-rate law,
  ln M_j(theta) = ln E[exp(theta Z_j W)], and the foreign term averages
  over W_f, contributing ln E[exp(theta z_f W_f)].

The conditional rate function splits into a deterministic part and an
environment fluctuation.  With g the outer average of the per-peptide
log-MGF profile and theta_0 solving the deterministic tilt equation,

    I^cond(a, z_f) = I_0 - foreign_term - Z_n(q_n theta_0)/sqrt(n) + R_n,

where Z_n is the sqrt(n)-scaled centered sum of per-peptide log-MGFs and
the remainder is the curvature-weighted square of its first derivative,

    R_n = Z_n'^2 / (2 n (g'' + Z_n''/sqrt(n) [+ foreign curvature])).

Z_n' and Z_n'' use the analytic tilted-moment ratios, not numerical
differentiation.  For the presentation-quenched case the deterministic
foreign log-MGF contributes its own curvature to the denominator; it is
O(z_f^2/n) and vanishes in the regime z_f << sqrt(n).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .annealed import ActivationEstimate, build_estimate, _memoized_triple
from .distributions import (
    BoundedDistribution,
    log_mgf,
    sum_lattice,
    _tilted_moments,
)
from .errors import ConfigError, DecompositionError, DomainError, ValidityWarning
from .model import Environment, ModelParams
from .tilt import CumulantFunction, TiltSolution, solve_tilt

#: Minimum deterministic curvature for the rate decomposition.
MIN_CURVATURE = 1e-8


# ---------------------------------------------------------------------------
# grouped conditional cumulant
# ---------------------------------------------------------------------------

def _grouped(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    u, c = np.unique(np.asarray(values, float), return_counts=True)
    return u, c.astype(float)


@dataclass(frozen=True, eq=False)
class QuenchedAssembly:
    """Conditional cumulant for one environment, grouped by unique values.

    ``blocks`` holds (inner_law, unique_outer_values, counts) per peptide
    block; the inner law is the one being averaged over (copy numbers for
    kind "R", stimulation rates for kind "Z").
    """

    kind: str
    params: ModelParams
    env: Environment
    cumulant: CumulantFunction
    n: int
    mean: float     # conditional E[G_n(z_f) | env]
    lattice: tuple[float, float] | None
    blocks: tuple[tuple[BoundedDistribution, np.ndarray, np.ndarray], ...]
    notes: tuple[str, ...] = ()

    def peptide_log_mgfs(self, theta: float) -> np.ndarray:
        """ln M_j(theta) for every peptide j, in environment order."""
        p = self.params
        if self.kind == "R":
            w = self.env.w_self()
            out = np.empty(w.size)
            out[: p.n_c] = log_mgf(p.law_Zc, theta * w[: p.n_c])
            out[p.n_c:] = log_mgf(p.law_Zv, theta * w[p.n_c:])
            return out
        z = self.env.values
        return log_mgf(p.law_W, theta * z)


def assemble_quenched(params: ModelParams, env: Environment) -> QuenchedAssembly:
    env.check_dims(params)
    n, q, z_f = params.n, params.q_n, params.z_f
    w_law = params.law_W

    if env.kind == "R":
        w = env.w_self()
        blocks = (
            (params.law_Zc, *_grouped(w[: params.n_c])),
            (params.law_Zv, *_grouped(w[params.n_c:])),
        )
        w_f = env.w_f
    else:
        blocks = (
            (params.law_W, *_grouped(env.z_c(params))),
            (params.law_W, *_grouped(env.z_v(params))),
        )
        w_f = None

    def evaluate(theta: float):
        psi = dpsi = d2 = 0.0
        for inner, u, cnt in blocks:
            t = q * theta * u
            psi += float(cnt @ log_mgf(inner, t))
            m, v = _tilted_moments(inner, t)
            dpsi += float(cnt @ (q * u * m))
            d2 += float(cnt @ ((q * u) ** 2 * v))
        if z_f > 0.0:
            if env.kind == "R":
                psi += theta * z_f * w_f
                dpsi += z_f * w_f
            else:
                psi += log_mgf(w_law, z_f * theta)
                mw, vw = _tilted_moments(w_law, z_f * theta)
                dpsi += z_f * mw
                d2 += z_f * z_f * vw
        return psi / n, dpsi / n, d2 / n

    # lattice of the conditional total, for the sharp prefactor
    all_discrete = all(inner.kind == "discrete" for inner, _, _ in blocks) and (
        z_f == 0.0 or env.kind == "R" or w_law.kind == "discrete")
    lattice = None
    if all_discrete:
        summands: list[tuple[np.ndarray, int]] = []
        for inner, u, cnt in blocks:
            for value, count in zip(u, cnt):
                summands.append((q * value * inner.support, int(count)))
        if z_f > 0.0:
            if env.kind == "R":
                summands.append((np.array([z_f * w_f]), 1))
            else:
                summands.append((z_f * w_law.support, 1))
        lattice = sum_lattice(summands)

    cumulant = _memoized_triple(evaluate)
    mean = cumulant.dpsi(0.0) * n
    notes = []
    inner_c = blocks[0][0]
    if inner_c.kind == "discrete" and inner_c.is_lattice and not inner_c.is_degenerate:
        notes.append(
            "conditioning leaves lattice-valued summands; span-corrected prefactor in use"
        )
    return QuenchedAssembly(
        kind=env.kind, params=params, env=env, cumulant=cumulant, n=n,
        mean=mean, lattice=lattice, blocks=blocks, notes=tuple(notes),
    )


# ---------------------------------------------------------------------------
# rate and probability
# ---------------------------------------------------------------------------

def rate_quenched(params: ModelParams, env: Environment, a: float,
                  assembly: QuenchedAssembly | None = None) -> TiltSolution:
    """Tilting solution for the conditional cumulant of one environment."""
    assembly = assembly or assemble_quenched(params, env)
    if env.kind == "R" and params.z_f > 0.0 and a * params.n <= params.z_f * env.w_f:
        raise DomainError(
            f"threshold a*n={a * params.n!r} does not exceed the fixed foreign "
            f"contribution z_f*W_f={params.z_f * env.w_f!r}; the self-background "
            "rate would sit at a negative effective level"
        )
    return solve_tilt(assembly.cumulant, a)


def probability_quenched(params: ModelParams, env: Environment, a: float) -> ActivationEstimate:
    """Sharp approximation of the conditional activation probability."""
    assembly = assemble_quenched(params, env)
    sol = rate_quenched(params, env, a, assembly)
    return build_estimate(
        assembly.n, sol, a * assembly.n, assembly.lattice,
        method=f"sharp-quenched-{env.kind}",
        extra_diagnostics={
            "z_f": params.z_f, "q_n": params.q_n, "env_hash": env.digest(),
            "conditional_mean": assembly.mean,
        },
        extra_warnings=assembly.notes,
    )


# ---------------------------------------------------------------------------
# deterministic mean cumulant (outer expectation over the conditioning law)
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MeanCumulant:
    """g(tau): the outer average of the per-peptide log-MGF profile.

    For kind "R" the outer law is the stimulation-rate law and the inner
    laws are the copy-number laws; for kind "Z" the roles swap.  Outer
    expectations are exact sums over the outer law's weighted support
    (quadrature nodes for scaled-continuous laws).
    """

    kind: str
    params: ModelParams
    blocks: tuple[tuple[float, BoundedDistribution, BoundedDistribution], ...]
    # (count, inner law, outer law) per block

    def block_terms(self, tau: float):
        """Per block: outer probs and the profile (lam, u*lam', u^2*lam'')."""
        out = []
        for count, inner, outer in self.blocks:
            u = outer.support
            t = tau * u
            lam = log_mgf(inner, t)
            m, v = _tilted_moments(inner, t)
            out.append((count, outer.probs, lam, u * m, u * u * v))
        return out

    def g(self, tau: float) -> float:
        n = self.params.n
        return sum(c * float(p @ lam) for c, p, lam, _, _ in self.block_terms(tau)) / n

    def dg(self, tau: float) -> float:
        n = self.params.n
        return sum(c * float(p @ d1) for c, p, _, d1, _ in self.block_terms(tau)) / n

    def d2g(self, tau: float) -> float:
        n = self.params.n
        return sum(c * float(p @ d2) for c, p, _, _, d2 in self.block_terms(tau)) / n


def mean_cumulant(params: ModelParams, kind: str) -> MeanCumulant:
    if kind == "R":
        blocks = (
            (float(params.n_c), params.law_Zc, params.law_W),
            (float(params.n_v), params.law_Zv, params.law_W),
        )
    elif kind == "Z":
        blocks = (
            (float(params.n_c), params.law_W, params.law_Zc),
            (float(params.n_v), params.law_W, params.law_Zv),
        )
    else:
        raise ConfigError(f"unknown quenched kind {kind!r}")
    return MeanCumulant(kind=kind, params=params, blocks=blocks)


def deterministic_cumulant(
    mc: MeanCumulant, w_f: float | None = None
) -> CumulantFunction:
    """psi_0(theta) = g(q_n theta) + foreign term, as a cumulant triple.

    Solving psi_0'(theta) = a gives the deterministic tilt theta_0 of the
    decomposition (for kind "R" the foreign term theta z_f W_f / n needs
    the environment's W_f; for kind "Z" it is the deterministic
    ln M_W(z_f theta) / n).
    """
    params = mc.params
    n, q, z_f = params.n, params.q_n, params.z_f
    w_law = params.law_W
    if mc.kind == "R" and z_f > 0.0 and w_f is None:
        raise ConfigError("kind 'R' with z_f > 0 needs the environment's W_f")

    def evaluate(theta: float):
        tau = q * theta
        psi = mc.g(tau)
        dpsi = q * mc.dg(tau)
        d2 = q * q * mc.d2g(tau)
        if z_f > 0.0:
            if mc.kind == "R":
                psi += theta * z_f * w_f / n
                dpsi += z_f * w_f / n
            else:
                psi += log_mgf(w_law, z_f * theta) / n
                mw, vw = _tilted_moments(w_law, z_f * theta)
                dpsi += z_f * mw / n
                d2 += z_f * z_f * vw / n
        return psi, dpsi, d2

    return _memoized_triple(evaluate)


# ---------------------------------------------------------------------------
# rate decomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateDecomposition:
    """Deterministic part, fluctuation and remainder of a quenched rate.

    ``total = I0 - foreign_term - Zn/sqrt(n) + remainder`` reconstructs the
    directly solved conditional rate up to o(1/n).
    """

    kind: str
    I0: float
    theta0: float
    Zn: float
    foreign_term: float
    remainder: float
    total: float
    curvature: float


def decompose_rate(
    params: ModelParams, env: Environment, a: float,
    min_curvature: float = MIN_CURVATURE,
) -> RateDecomposition:
    env.check_dims(params)
    n, q, z_f = params.n, params.q_n, params.z_f
    mc = mean_cumulant(params, env.kind)
    w_f = env.w_f if env.kind == "R" else None
    det = deterministic_cumulant(mc, w_f=w_f)
    sol = solve_tilt(det, a)
    theta0 = sol.theta
    tau = q * theta0

    if env.kind == "R":
        foreign = z_f * w_f * theta0 / n
    else:
        foreign = log_mgf(params.law_W, z_f * theta0) / n if z_f > 0.0 else 0.0
    # sol.rate = a*theta0 - psi0(theta0) = I0 - foreign
    I0 = sol.rate + foreign

    # centered per-peptide sums and their theta-derivatives at q_n theta_0
    sqrt_n = math.sqrt(n)
    terms = mc.block_terms(tau)
    if env.kind == "R":
        env_blocks = (env.w_self()[: params.n_c], env.w_self()[params.n_c:])
        inner_laws = (params.law_Zc, params.law_Zv)
    else:
        env_blocks = (env.z_c(params), env.z_v(params))
        inner_laws = (params.law_W, params.law_W)

    Zn = dZn = d2Zn = 0.0
    for (count, probs, lam, d1, d2), values, inner in zip(terms, env_blocks, inner_laws):
        u = values
        t = tau * u
        lam_j = log_mgf(inner, t)
        m_j, v_j = _tilted_moments(inner, t)
        Zn += float(np.sum(lam_j)) - count * float(probs @ lam)
        dZn += float(u @ m_j) - count * float(probs @ d1)
        d2Zn += float((u * u) @ v_j) - count * float(probs @ d2)
    Zn /= sqrt_n
    dZn /= sqrt_n
    d2Zn /= sqrt_n

    g2 = mc.d2g(tau)
    if not g2 > min_curvature:
        raise DecompositionError(
            f"deterministic curvature g''({tau!r})={g2!r} is below the "
            f"threshold {min_curvature!r}; decomposition unavailable"
        )
    denom = g2 + d2Zn / sqrt_n
    if env.kind == "Z" and z_f > 0.0:
        # deterministic foreign curvature, O(z_f^2 / n)
        from .distributions import d2log_mgf
        denom += z_f * z_f * d2log_mgf(params.law_W, z_f * theta0) / (n * q * q)
    if denom <= 0.0:
        raise DecompositionError(
            f"fluctuation-corrected curvature {denom!r} is not positive"
        )
    remainder = dZn * dZn / (2.0 * n * denom)
    total = I0 - foreign - Zn / sqrt_n + remainder
    return RateDecomposition(
        kind=env.kind, I0=I0, theta0=theta0, Zn=Zn, foreign_term=foreign,
        remainder=remainder, total=total, curvature=g2,
    )


# ---------------------------------------------------------------------------
# foreign-to-self probability ratios
# ---------------------------------------------------------------------------

def _warn_small_z_f(z_f: float, n: int) -> None:
    if 0.0 < z_f < 2.0 * math.sqrt(n):
        warnings.warn(
            f"ratio requested at z_f={z_f:g} < 2*sqrt(n)={2 * math.sqrt(n):.3g}; the "
            "closed-form ratio assumes z_f >> sqrt(n)",
            ValidityWarning, stacklevel=3,
        )


def ratio_quenched_R(params: ModelParams, env: Environment, a: float, z_f: float) -> float:
    """Asymptotic conditional ratio exp(theta_0(a,0) z_f (W_f - a n / n_M)).

    Positive growth in z_f requires the receptor's foreign stimulation
    rate W_f to exceed a n / n_M; weakly reacting receptors see their
    activation probability drop as z_f grows.
    """
    if env.kind != "R":
        raise ConfigError("ratio_quenched_R needs an environment of kind 'R'")
    env.check_dims(params)
    _warn_small_z_f(z_f, params.n)
    base = params.with_z_f(0.0)
    det = deterministic_cumulant(mean_cumulant(base, "R"), w_f=env.w_f)
    theta0 = solve_tilt(det, a).theta
    return math.exp(theta0 * z_f * (env.w_f - a * params.n / params.n_M))


def ratio_quenched_Z(params: ModelParams, a: float, z_f: float) -> float:
    """Asymptotic conditional ratio exp(theta~(a,0) z_f (L - a n / n_M)).

    Deterministic across presentation profiles: the foreign term of the
    presentation-quenched rate does not depend on the environment.
    """
    _warn_small_z_f(z_f, params.n)
    base = params.with_z_f(0.0)
    det = deterministic_cumulant(mean_cumulant(base, "Z"))
    theta0 = solve_tilt(det, a).theta
    L = params.law_W.upper
    return math.exp(theta0 * z_f * (L - a * params.n / params.n_M))
