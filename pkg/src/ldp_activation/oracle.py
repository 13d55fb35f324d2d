"""Independent ground-truth estimators for activation probabilities.

Three oracles, all independent of the sharp-approximation path:

* ``exact_tail``: the distribution of the total is enumerated by dynamic
  programming on a rescaled integer lattice (supports snapped to a common
  span via a float GCD at fixed resolution; incommensurable supports are
  refused rather than rounded).
* ``naive_mc``: plain Monte Carlo frequency with binomial standard error.
* ``tilted_is``: importance sampling under the product-form exponential
  tilt; every summand is drawn from its tilted law and the unbiased
  weight exp(-theta S) Phi_n(theta) is attached.

Within a peptide block the summands are exchangeable given the
environment, so sampling reduces to multinomial counts over each group's
support; groups follow the block structure (constitutive, then variable),
conditioning merely refines them by unique environment value.  Draws are
partitioned into fixed-size blocks with per-block substreams derived from
the estimate's seed, so results are bit-identical for any degree of
parallelism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .annealed import assemble_annealed
from .distributions import product_law, sum_lattice
from .errors import DomainError
from .model import Environment, ModelParams
from .quenched import assemble_quenched
from .streams import derive_rng, ordered_map
from .tilt import solve_tilt

#: Draws per Monte Carlo work block (fixed: block layout defines the stream).
MC_BLOCK = 1 << 17
#: Default cap on DP states for exact enumeration.
STATE_BOUND = 10_000_000
#: Value-lattice resolution for exact enumeration.
RESOLUTION = 1e-9


@dataclass(frozen=True)
class OracleEstimate:
    value: float
    std_error: float
    method: str
    draws: int
    seed: int


# ---------------------------------------------------------------------------
# summand groups
# ---------------------------------------------------------------------------

def _check_finite_discrete(law: BoundedDistribution, name: str) -> None:
    if law.kind != "discrete":
        raise DomainError(f"exact enumeration needs a finite-discrete {name} law")


def _groups(params: ModelParams, env: Environment | None):
    """Summand groups (support, probs, count) plus the foreign summand.

    Supports carry all scale factors (q_n, environment values, z_f), so a
    tilt parameter applies to them directly.  The foreign part is either
    None, a constant float, or a (support, probs) law.
    """
    q, z_f = params.q_n, params.z_f
    groups: list[tuple[np.ndarray, np.ndarray, int]] = []
    if env is None:
        for z_law, count in ((params.law_Zc, params.n_c), (params.law_Zv, params.n_v)):
            x = product_law(z_law, params.law_W)
            groups.append((q * x.support, x.probs, count))
        foreign = _foreign_part(params)
        return groups, foreign

    env.check_dims(params)
    if env.kind == "R":
        w = env.w_self()
        for z_law, chunk in ((params.law_Zc, w[: params.n_c]),
                             (params.law_Zv, w[params.n_c:])):
            uniq, counts = np.unique(chunk, return_counts=True)
            for value, count in zip(uniq, counts):
                groups.append((q * value * z_law.support, z_law.probs, int(count)))
        foreign = z_f * env.w_f if z_f > 0.0 else None
        return groups, foreign

    for chunk in (env.z_c(params), env.z_v(params)):
        uniq, counts = np.unique(chunk, return_counts=True)
        for value, count in zip(uniq, counts):
            groups.append((q * value * params.law_W.support, params.law_W.probs,
                           int(count)))
    return groups, _foreign_part(params)


def _foreign_part(params: ModelParams):
    if params.z_f == 0.0:
        return None
    w = params.law_W
    if w.is_degenerate:
        return params.z_f * float(w.support[0])
    return params.z_f * w.support, w.probs


def _assembly(params: ModelParams, env: Environment | None):
    return assemble_annealed(params) if env is None else assemble_quenched(params, env)


# ---------------------------------------------------------------------------
# exact enumeration
# ---------------------------------------------------------------------------

def exact_tail(
    params: ModelParams,
    env: Environment | None,
    a: float,
    state_bound: int = STATE_BOUND,
    resolution: float = RESOLUTION,
) -> OracleEstimate:
    """P(G_n(z_f) >= a n) by exact convolution on a rescaled integer lattice."""
    _check_finite_discrete(params.law_Zc, "Z^c")
    _check_finite_discrete(params.law_Zv, "Z^v")
    _check_finite_discrete(params.law_W, "W")
    groups, foreign = _groups(params, env)
    summands = [(sup, count) for sup, _, count in groups]
    if isinstance(foreign, float):
        summands.append((np.array([foreign]), 1))
    elif foreign is not None:
        summands.append((foreign[0], 1))
    lattice = sum_lattice(summands, tol=resolution)
    if lattice is None:
        raise DomainError(
            "summand supports are incommensurable at the configured resolution; "
            "refusing to round silently"
        )
    span, origin = lattice
    threshold = a * params.n

    if span == 0.0:  # fully degenerate total
        value = 1.0 if origin >= threshold - resolution else 0.0
        return OracleEstimate(value, 0.0, "exact", 0, params.seed)

    top = origin + sum(count * (float(np.max(sup)) - float(np.min(sup)))
                       for sup, count in summands)
    n_states = int(round((top - origin) / span)) + 1
    if n_states > state_bound:
        raise DomainError(
            f"exact enumeration needs {n_states} lattice states, above the "
            f"bound {state_bound}"
        )

    pmf = np.ones(1)
    for sup, probs, count in groups:
        idx = np.rint((sup - float(np.min(sup))) / span).astype(int)
        base = np.zeros(idx.max() + 1)
        np.add.at(base, idx, probs)
        for _ in range(count):
            pmf = np.convolve(pmf, base)
    if foreign is not None and not isinstance(foreign, float):
        sup, probs = foreign
        idx = np.rint((sup - float(np.min(sup))) / span).astype(int)
        base = np.zeros(idx.max() + 1)
        np.add.at(base, idx, probs)
        pmf = np.convolve(pmf, base)

    k_min = math.ceil((threshold - origin - resolution) / span)
    if k_min <= 0:
        value = 1.0
    elif k_min >= pmf.size:
        value = 0.0
    else:
        value = float(np.clip(pmf[k_min:].sum(), 0.0, 1.0))
    return OracleEstimate(value, 0.0, "exact", 0, params.seed)


# ---------------------------------------------------------------------------
# sampling machinery
# ---------------------------------------------------------------------------

def _tilt(sup: np.ndarray, probs: np.ndarray, theta: float) -> np.ndarray:
    if theta == 0.0:
        return probs
    e = theta * sup
    w = probs * np.exp(e - e.max())
    return w / w.sum()


def _draw_block_totals(
    groups, foreign, theta: float, rng: np.random.Generator, m: int
) -> np.ndarray:
    totals = np.zeros(m)
    for sup, probs, count in groups:
        counts = rng.multinomial(count, _tilt(sup, probs, theta), size=m)
        totals += counts @ sup
    if isinstance(foreign, float):
        totals += foreign
    elif foreign is not None:
        sup, probs = foreign
        totals += rng.choice(sup, size=m, p=_tilt(sup, probs, theta))
    return totals


def sample_totals(
    params: ModelParams,
    env: Environment | None,
    draws: int,
    seed: int,
    theta: float = 0.0,
) -> np.ndarray:
    """Reproducible draws of the total G_n(z_f), optionally tilted by theta.

    The draw is partitioned into fixed-size blocks with substreams
    ``derive_rng(seed, block_index)``; the concatenated output does not
    depend on how blocks are executed.
    """
    if draws < 1:
        raise DomainError("draws must be at least 1")
    groups, foreign = _groups(params, env)
    blocks = [(i, min(MC_BLOCK, draws - i * MC_BLOCK))
              for i in range((draws + MC_BLOCK - 1) // MC_BLOCK)]

    def run(block):
        idx, m = block
        return _draw_block_totals(groups, foreign, theta, derive_rng(seed, idx), m)

    return np.concatenate(ordered_map(run, blocks))


def naive_mc(
    params: ModelParams,
    env: Environment | None,
    a: float,
    draws: int,
    seed: int,
) -> OracleEstimate:
    """Plain Monte Carlo estimate of P(G_n(z_f) >= a n)."""
    if draws < 1:
        raise DomainError("draws must be at least 1")
    groups, foreign = _groups(params, env)
    threshold = a * params.n
    blocks = [(i, min(MC_BLOCK, draws - i * MC_BLOCK))
              for i in range((draws + MC_BLOCK - 1) // MC_BLOCK)]

    def run(block):
        idx, m = block
        totals = _draw_block_totals(groups, foreign, 0.0, derive_rng(seed, idx), m)
        return int(np.count_nonzero(totals >= threshold))

    hits = sum(ordered_map(run, blocks))
    p_hat = hits / draws
    se = math.sqrt(max(p_hat * (1.0 - p_hat), 0.0) / draws)
    return OracleEstimate(p_hat, se, "naive-mc", draws, seed)


def tilted_is(
    params: ModelParams,
    env: Environment | None,
    a: float,
    draws: int,
    seed: int,
    theta: float | None = None,
) -> OracleEstimate:
    """Exponentially tilted importance-sampling estimate of the tail.

    Each summand is drawn from its tilted law; the attached weight
    exp(-theta S + n Psi_n(theta)) makes the estimator unbiased.  With
    ``theta`` forced to 0 the weights are identically 1 and the estimator
    reduces to naive Monte Carlo on the same stream.
    """
    if draws < 1:
        raise DomainError("draws must be at least 1")
    assembly = _assembly(params, env)
    if theta is None:
        theta = solve_tilt(assembly.cumulant, a).theta
    log_norm = params.n * assembly.cumulant.psi(theta)
    groups, foreign = _groups(params, env)
    threshold = a * params.n
    blocks = [(i, min(MC_BLOCK, draws - i * MC_BLOCK))
              for i in range((draws + MC_BLOCK - 1) // MC_BLOCK)]

    def run(block):
        idx, m = block
        totals = _draw_block_totals(groups, foreign, theta, derive_rng(seed, idx), m)
        w = np.where(totals >= threshold, np.exp(-theta * totals + log_norm), 0.0)
        return float(w.sum()), float((w * w).sum())

    partials = ordered_map(run, blocks)
    s1 = sum(p[0] for p in partials)
    s2 = sum(p[1] for p in partials)
    value = s1 / draws
    var = max(s2 / draws - value * value, 0.0)
    return OracleEstimate(value, math.sqrt(var / draws), "tilted-is", draws, seed)
