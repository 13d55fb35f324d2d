"""Empirical checks of the Gaussian fluctuation of quenched rate functions.

Across environments the conditional rate fluctuates through the process

    Z_n(tau) = n^{-1/2} * sum_j ( ln M_j(tau) - E[ln M_j(tau)] ),

evaluated at tau = q_n * theta_0(a).  In the large-n limit Z_n is a
centered Gaussian process in the threshold slope a whose covariance is a
block-weighted covariance of per-peptide log-MGF profiles under the
conditioning law:

    Cov(a, a') = (n_c/n) Cov_outer( lam_c^a, lam_c^{a'} )
               + (n_v/n) Cov_outer( lam_v^a, lam_v^{a'} ),

with lam_gamma^a the log conditional MGF at the tilt for level a.  This
module simulates replicas of Z_n over an a-grid, compares the empirical
covariance against the closed form (computed by exact outer summation),
attaches jackknife standard errors, and runs a moment-based omnibus
normality test on each marginal.

Tightness and process-level convergence are not testable at finite n;
only these finite-n signatures are checked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .distributions import log_mgf, sample
from .errors import DomainError, LdpError
from .model import ModelParams
from .quenched import deterministic_cumulant, mean_cumulant
from .tilt import solve_tilt

#: Minimum sample size for the omnibus normality test.
MIN_NORMALITY_SAMPLES = 100
#: Minimum replica count for a covariance report.
MIN_REPLICAS = 100


def normality_diagnostic(samples) -> float:
    """p-value of the D'Agostino-Pearson omnibus test (skewness+kurtosis)."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < MIN_NORMALITY_SAMPLES:
        raise DomainError(
            f"normality diagnostic needs at least {MIN_NORMALITY_SAMPLES} samples, "
            f"got {x.size}"
        )
    if np.ptp(x) == 0.0 or float(np.std(x)) == 0.0:
        raise DomainError("normality diagnostic is undefined for constant samples")
    return float(stats.normaltest(x).pvalue)


@dataclass(frozen=True, eq=False)
class FluctuationReport:
    """Empirical vs predicted covariance of Z_n over an a-grid."""

    kind: str
    a_grid: tuple[float, ...]
    valid: tuple[bool, ...]
    point_errors: tuple[str | None, ...]
    n: int
    z_f: float
    replicas: int
    theta0: tuple[float, ...]             # deterministic tilts, valid points
    empirical_mean: np.ndarray
    empirical_cov: np.ndarray
    predicted_cov: np.ndarray
    jackknife_se: np.ndarray
    max_abs_cov_error: float
    normality_pvalues: tuple[float, ...]
    eigenvalues_empirical: np.ndarray = field(default_factory=lambda: np.empty(0))
    eigenvalues_predicted: np.ndarray = field(default_factory=lambda: np.empty(0))

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "a_grid": list(self.a_grid),
            "valid": list(self.valid),
            "point_errors": list(self.point_errors),
            "n": self.n,
            "z_f": self.z_f,
            "replicas": self.replicas,
            "theta0": list(self.theta0),
            "empirical_mean": self.empirical_mean.tolist(),
            "empirical_cov": self.empirical_cov.tolist(),
            "predicted_cov": self.predicted_cov.tolist(),
            "jackknife_se": self.jackknife_se.tolist(),
            "max_abs_cov_error": self.max_abs_cov_error,
            "normality_pvalues": [None if math.isnan(p) else p
                                  for p in self.normality_pvalues],
            "eigenvalues_empirical": self.eigenvalues_empirical.tolist(),
            "eigenvalues_predicted": self.eigenvalues_predicted.tolist(),
        }


def _jackknife_cov_se(samples: np.ndarray) -> np.ndarray:
    """Leave-one-out standard errors for each sample-covariance entry."""
    r, m = samples.shape
    s1 = samples.sum(axis=0)
    s2 = np.einsum("ri,rj->ij", samples, samples)
    loo1 = s1[None, :] - samples                      # (r, m)
    loo2 = s2[None, :, :] - np.einsum("ri,rj->rij", samples, samples)
    k = r - 1
    cov_loo = (loo2 - np.einsum("ri,rj->rij", loo1, loo1) / k) / (k - 1)
    center = cov_loo.mean(axis=0)
    return np.sqrt((r - 1) / r * np.sum((cov_loo - center) ** 2, axis=0))


def simulate_fluctuation(
    params: ModelParams,
    kind: str,
    a_grid,
    replicas: int,
    rng: np.random.Generator,
) -> FluctuationReport:
    """Replicate Z_n across environments and compare covariances.

    Z_n is evaluated at the deterministic tilt theta_0(a) of the rate
    decomposition (for kind "R" with z_f > 0 the reference tilt uses
    W_f = E[W], so one centering per grid point suffices).  Invalid grid
    points (below the conditional mean or beyond saturation) are reported
    per point and excluded from the matrices.
    """
    if replicas < MIN_REPLICAS:
        raise DomainError(f"need at least {MIN_REPLICAS} replicas, got {replicas}")
    a_grid = [float(a) for a in np.atleast_1d(np.asarray(a_grid, dtype=float))]
    if not a_grid:
        raise DomainError("a_grid must be non-empty")

    mc = mean_cumulant(params, kind)
    w_f_ref = params.law_W.mean if (kind == "R" and params.z_f > 0.0) else None
    det = deterministic_cumulant(mc, w_f=w_f_ref)

    taus: list[float] = []
    valid: list[bool] = []
    errors: list[str | None] = []
    for a in a_grid:
        try:
            sol = solve_tilt(det, a)
        except LdpError as exc:
            valid.append(False)
            errors.append(f"{type(exc).__name__}: {exc}")
            continue
        valid.append(True)
        errors.append(None)
        taus.append(params.q_n * sol.theta)
    if not taus:
        raise DomainError("no valid grid points: " + "; ".join(e or "" for e in errors))

    n = params.n
    n_c, n_v = params.n_c, params.n_v
    sqrt_n = math.sqrt(n)

    # one vectorized draw of all replica environments
    if kind == "R":
        outer_draws = [
            np.asarray(sample(params.law_W, rng, size=(replicas, n_c)), float),
            np.asarray(sample(params.law_W, rng, size=(replicas, n_v)), float),
        ]
        inner_laws = (params.law_Zc, params.law_Zv)
    else:
        outer_draws = [
            np.asarray(sample(params.law_Zc, rng, size=(replicas, n_c)), float),
            np.asarray(sample(params.law_Zv, rng, size=(replicas, n_v)), float),
        ]
        inner_laws = (params.law_W, params.law_W)

    m = len(taus)
    samples = np.zeros((replicas, m))
    predicted = np.zeros((m, m))
    counts = (float(n_c), float(n_v))
    for b, (inner, draws) in enumerate(zip(inner_laws, outer_draws)):
        outer = mc.blocks[b][2]
        lam_profiles = np.stack([log_mgf(inner, tau * outer.support) for tau in taus])
        p = outer.probs
        e_lam = lam_profiles @ p                      # (m,)
        predicted += counts[b] / n * (
            np.einsum("jk,lk,k->jl", lam_profiles, lam_profiles, p)
            - np.outer(e_lam, e_lam)
        )
        for j, tau in enumerate(taus):
            lam = log_mgf(inner, tau * draws)         # (replicas, count)
            samples[:, j] += lam.sum(axis=1) - counts[b] * e_lam[j]
    samples /= sqrt_n

    empirical_mean = samples.mean(axis=0)
    if np.ptp(samples, axis=0).max() == 0.0:
        empirical_cov = np.zeros((m, m))
        jack = np.zeros((m, m))
    else:
        empirical_cov = np.atleast_2d(np.cov(samples.T, ddof=1))
        jack = _jackknife_cov_se(samples)
    # symmetry is exact by construction (shared upper/lower computation)
    empirical_cov = 0.5 * (empirical_cov + empirical_cov.T)

    pvalues = []
    for j in range(m):
        try:
            pvalues.append(normality_diagnostic(samples[:, j]))
        except DomainError:
            pvalues.append(float("nan"))

    return FluctuationReport(
        kind=kind,
        a_grid=tuple(a_grid),
        valid=tuple(valid),
        point_errors=tuple(errors),
        n=n,
        z_f=params.z_f,
        replicas=replicas,
        theta0=tuple(t / params.q_n for t in taus),
        empirical_mean=empirical_mean,
        empirical_cov=empirical_cov,
        predicted_cov=predicted,
        jackknife_se=jack,
        max_abs_cov_error=float(np.max(np.abs(empirical_cov - predicted))),
        normality_pvalues=tuple(pvalues),
        eigenvalues_empirical=np.linalg.eigvalsh(empirical_cov),
        eigenvalues_predicted=np.linalg.eigvalsh(predicted),
    )
