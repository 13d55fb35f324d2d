"""The total-stimulation-rate model and its first two moments.

One model instance fixes the numbers of constitutive and variable peptide
types (n_c, n_v), the foreign copy number z_f, the three component laws
(copy numbers Z^c, Z^v and stimulation rates W), and a threshold slope a
defining the activation level g_act = a*n with n = n_c + n_v + 1.

The total rate of one encounter is

    G_n(z_f) = q_n * (sum_j Z_j^c W_j + sum_j Z_j^v W_j) + z_f * W_f,

where q_n = (n_M - z_f)/n_M displaces the presented self peptides
proportionally and n_M = n_c E[Z^c] + n_v E[Z^v] is the expected total
number of presented self copies.  Conditioning either on the receptor
side (the W vector, kind "R") or on the presentation profile (the Z
vector, kind "Z") gives the two quenched regimes.

Closed-form moment identities implemented here:

* the mean E[G_n(z_f)] = n_M E[W] does not depend on z_f;
* the annealed variance difference V[G_n(z_f)] - V[G_n(0)] is a parabola
  in z_f with roots at 0 and 2 n_M V0 / (V[W] n_M^2 + V0);
* conditioned on the receptor, the variance difference collapses to
  V^R[G_n(0)] * z_f (z_f - 2 n_M) / n_M^2, negative on (0, 2 n_M);
* conditioned on the presentation profile, the mean difference vanishes
  and the variance difference keeps the parabola form with conditional
  moments.

The quenched *mean*-difference formulas (z_f (W_f - E[W]) and 0) hold for
the environment ensemble in the large-n limit; the per-environment exact
conditional moments are available from :func:`conditional_moments`.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy.special import ndtri

from .distributions import (
    BoundedDistribution,
    dist_from_config,
    dist_to_config,
    product_law,
    sample,
)
from .errors import ConfigError, DomainError

#: Chunk size (total scalar draws) for vectorized sampling.
_CHUNK = 1 << 20


@dataclass(frozen=True)
class ModelParams:
    """Full specification of one model instance."""

    n_c: int
    n_v: int
    z_f: float
    law_Zc: BoundedDistribution
    law_Zv: BoundedDistribution
    law_W: BoundedDistribution
    a: float
    seed: int = 0

    def __post_init__(self):
        if int(self.n_c) != self.n_c or int(self.n_v) != self.n_v:
            raise ConfigError("n_c and n_v must be integers")
        if self.n_c < 1 or self.n_v < 1:
            raise ConfigError("n_c and n_v must be positive")
        if not math.isfinite(self.z_f) or self.z_f < 0:
            raise ConfigError("z_f must be a nonnegative real")
        if self.z_f >= self.n_M:
            raise ConfigError(
                f"z_f={self.z_f!r} must be smaller than n_M={self.n_M!r} "
                "(q_n would not be positive)"
            )

    @property
    def n(self) -> int:
        return self.n_c + self.n_v + 1

    @property
    def n_M(self) -> float:
        return self.n_c * self.law_Zc.mean + self.n_v * self.law_Zv.mean

    @property
    def q_n(self) -> float:
        return (self.n_M - self.z_f) / self.n_M

    def with_z_f(self, z_f: float) -> "ModelParams":
        return replace(self, z_f=float(z_f))

    def to_config(self) -> dict:
        return {
            "n_c": self.n_c, "n_v": self.n_v, "z_f": self.z_f, "a": self.a,
            "seed": self.seed,
            "law_Zc": dist_to_config(self.law_Zc),
            "law_Zv": dist_to_config(self.law_Zv),
            "law_W": dist_to_config(self.law_W),
        }

    @staticmethod
    def from_config(cfg: dict) -> "ModelParams":
        try:
            return ModelParams(
                n_c=int(cfg["n_c"]), n_v=int(cfg["n_v"]), z_f=float(cfg["z_f"]),
                law_Zc=dist_from_config(cfg["law_Zc"]),
                law_Zv=dist_from_config(cfg["law_Zv"]),
                law_W=dist_from_config(cfg["law_W"]),
                a=float(cfg["a"]), seed=int(cfg.get("seed", 0)),
            )
        except KeyError as exc:
            raise ConfigError(f"model config is missing {exc.args[0]!r}") from None


def derived_constants(params: ModelParams) -> tuple[int, float, float]:
    """(n, n_M, q_n) for a valid parameter set."""
    return params.n, params.n_M, params.q_n


# ---------------------------------------------------------------------------
# quenched environments
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Environment:
    """One quenched draw.

    kind "R": ``values`` holds (W_1 .. W_{n_c+n_v}, W_f).
    kind "Z": ``values`` holds (Z_1^c .. Z_{n_c}^c, Z_1^v .. Z_{n_v}^v).
    """

    kind: str
    values: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in ("R", "Z"):
            raise ConfigError(f"environment kind must be 'R' or 'Z', got {self.kind!r}")
        object.__setattr__(
            self, "values", np.atleast_1d(np.asarray(self.values, dtype=float))
        )

    def check_dims(self, params: ModelParams) -> None:
        expected = params.n_c + params.n_v + (1 if self.kind == "R" else 0)
        if self.values.size != expected:
            raise ConfigError(
                f"environment of kind {self.kind!r} needs {expected} values, "
                f"got {self.values.size}"
            )

    # R-case accessors -----------------------------------------------------
    def w_self(self) -> np.ndarray:
        return self.values[:-1]

    @property
    def w_f(self) -> float:
        return float(self.values[-1])

    # Z-case accessors -----------------------------------------------------
    def z_c(self, params: ModelParams) -> np.ndarray:
        return self.values[: params.n_c]

    def z_v(self, params: ModelParams) -> np.ndarray:
        return self.values[params.n_c:]

    def digest(self) -> str:
        """Short stable hash for reproducibility bookkeeping."""
        h = hashlib.sha256()
        h.update(self.kind.encode())
        h.update(self.values.tobytes())
        return h.hexdigest()[:16]

    def to_json(self) -> dict:
        return {"kind": self.kind, "values": [float(v) for v in self.values],
                "seed": self.seed}

    @staticmethod
    def from_json(obj: dict) -> "Environment":
        return Environment(kind=obj["kind"], values=np.asarray(obj["values"], float),
                           seed=obj.get("seed"))


def sample_environment(
    params: ModelParams, kind: str, rng: np.random.Generator
) -> Environment:
    """Draw one environment of the requested kind (i.i.d. coordinates)."""
    if kind == "R":
        w = sample(params.law_W, rng, size=params.n_c + params.n_v)
        w_f = sample(params.law_W, rng)
        return Environment(kind="R", values=np.append(w, w_f))
    if kind == "Z":
        zc = sample(params.law_Zc, rng, size=params.n_c)
        zv = sample(params.law_Zv, rng, size=params.n_v)
        return Environment(kind="Z", values=np.concatenate([zc, zv]))
    raise ConfigError(f"unknown environment kind {kind!r}")


# ---------------------------------------------------------------------------
# closed-form moments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AnnealedMoments:
    """Mean and variance of G_n(z_f) from component moments."""

    mean: float
    variance: float          # at the instance's z_f
    variance_zero: float     # V[G_n(0)]
    w_variance: float
    n_M: float

    def variance_at(self, z_f: float) -> float:
        q = (self.n_M - z_f) / self.n_M
        return q * q * self.variance_zero + z_f * z_f * self.w_variance

    def variance_diff(self, z_f: float) -> float:
        """V[G_n(z_f)] - V[G_n(0)]; parabola with roots 0 and second_root."""
        coeff = self.w_variance + self.variance_zero / self.n_M**2
        return coeff * z_f * (z_f - self.second_root)

    @property
    def second_root(self) -> float:
        v0 = self.variance_zero
        return 2.0 * self.n_M * v0 / (self.w_variance * self.n_M**2 + v0)


def moments_annealed(params: ModelParams) -> AnnealedMoments:
    xc = product_law(params.law_Zc, params.law_W)
    xv = product_law(params.law_Zv, params.law_W)
    v0 = params.n_c * xc.variance + params.n_v * xv.variance
    moments = AnnealedMoments(
        mean=params.n_M * params.law_W.mean,
        variance=0.0,
        variance_zero=v0,
        w_variance=params.law_W.variance,
        n_M=params.n_M,
    )
    return replace(moments, variance=moments.variance_at(params.z_f))


class MomentDiff(NamedTuple):
    mean_diff: float
    variance_diff: float


def conditional_moments(params: ModelParams, env: Environment) -> tuple[float, float]:
    """Exact conditional (mean, variance) of G_n(z_f) given the environment."""
    env.check_dims(params)
    q = params.q_n
    if env.kind == "R":
        w = env.w_self()
        ez = np.concatenate([
            np.full(params.n_c, params.law_Zc.mean),
            np.full(params.n_v, params.law_Zv.mean),
        ])
        vz = np.concatenate([
            np.full(params.n_c, params.law_Zc.variance),
            np.full(params.n_v, params.law_Zv.variance),
        ])
        mean = q * float(ez @ w) + params.z_f * env.w_f
        var = q * q * float(vz @ (w * w))
        return mean, var
    z = env.values
    ew, vw = params.law_W.mean, params.law_W.variance
    mean = q * ew * float(z.sum()) + params.z_f * ew
    var = q * q * vw * float(z @ z) + params.z_f**2 * vw
    return mean, var


def moments_quenched_R(params: ModelParams, env: Environment) -> MomentDiff:
    """Receptor-quenched moment differences between z_f and 0.

    The variance difference V^R[G(0)] * z_f (z_f - 2 n_M) / n_M^2 is exact
    for the given environment; the mean difference z_f (W_f - E[W]) holds
    in the large-n limit (the environment average of E[Z] W_j concentrates
    on n_M E[W]).
    """
    if env.kind != "R":
        raise ConfigError("moments_quenched_R needs an environment of kind 'R'")
    env.check_dims(params)
    _, var0 = conditional_moments(params.with_z_f(0.0), env)
    mean_diff = params.z_f * (env.w_f - params.law_W.mean)
    var_diff = var0 * params.z_f * (params.z_f - 2.0 * params.n_M) / params.n_M**2
    return MomentDiff(mean_diff, var_diff)


def moments_quenched_Z(params: ModelParams, env: Environment) -> MomentDiff:
    """Presentation-quenched moment differences between z_f and 0.

    The mean difference is 0 (large-n form; exact when the realized total
    copy number equals n_M) and the variance difference keeps the parabola
    form with the conditional variance of G(0), exactly per environment.
    """
    if env.kind != "Z":
        raise ConfigError("moments_quenched_Z needs an environment of kind 'Z'")
    env.check_dims(params)
    _, var0 = conditional_moments(params.with_z_f(0.0), env)
    vw = params.law_W.variance
    n_M = params.n_M
    coeff = vw + var0 / n_M**2
    root = 2.0 * n_M * var0 / (vw * n_M**2 + var0)
    return MomentDiff(0.0, coeff * params.z_f * (params.z_f - root))


def normal_interval(
    params: ModelParams,
    z_f: float,
    coverage: float = 0.99,
    regime: str = "annealed",
    env: Environment | None = None,
) -> tuple[float, float]:
    """Central normal-approximation interval for G_n(z_f).

    ``regime`` selects whose mean/variance to use: "annealed", or
    "quenched-R"/"quenched-Z" with the exact conditional moments of the
    supplied environment.
    """
    if not 0.0 < coverage < 1.0:
        raise DomainError("coverage must lie in (0, 1)")
    p = params.with_z_f(z_f)
    if regime == "annealed":
        mom = moments_annealed(p)
        mean, var = mom.mean, mom.variance
    elif regime in ("quenched-R", "quenched-Z"):
        if env is None:
            raise ConfigError(f"regime {regime!r} needs an environment")
        expected = "R" if regime.endswith("R") else "Z"
        if env.kind != expected:
            raise ConfigError(f"regime {regime!r} needs an environment of kind {expected!r}")
        mean, var = conditional_moments(p, env)
    else:
        raise ConfigError(f"unknown regime {regime!r}")
    half = float(ndtri(0.5 * (1.0 + coverage))) * math.sqrt(max(var, 0.0))
    return mean - half, mean + half


# ---------------------------------------------------------------------------
# sampling the total stimulation rate
# ---------------------------------------------------------------------------

def _block_dot(z_draws: np.ndarray, w: np.ndarray) -> np.ndarray:
    # z_draws: (k, m), w: (k,) -> (m,)
    return np.einsum("km,k->m", z_draws, w)


def _sample_G_chunk(params: ModelParams, env: Environment | None,
                    rng: np.random.Generator, m: int) -> np.ndarray:
    n_c, n_v, q, z_f = params.n_c, params.n_v, params.q_n, params.z_f
    if env is None or env.kind == "R":
        zc = np.asarray(sample(params.law_Zc, rng, size=(n_c, m)), float)
        zv = np.asarray(sample(params.law_Zv, rng, size=(n_v, m)), float)
        if env is None and not params.law_W.is_degenerate:
            w = np.asarray(sample(params.law_W, rng, size=(n_c + n_v, m)), float)
            self_term = np.einsum("km,km->m", zc, w[:n_c]) + np.einsum(
                "km,km->m", zv, w[n_c:])
            w_f = sample(params.law_W, rng, size=m) if z_f > 0 else 0.0
        else:
            # a degenerate receptor law forces a constant environment, so the
            # unconditional draw reduces to the conditional one exactly
            if env is None:
                w0 = float(params.law_W.support[0])
                w = np.full(n_c + n_v, w0)
                w_f = w0
            else:
                w = env.w_self()
                w_f = env.w_f
            self_term = _block_dot(zc, w[:n_c]) + _block_dot(zv, w[n_c:])
    else:  # conditioning on the presentation profile
        w = np.asarray(sample(params.law_W, rng, size=(n_c + n_v, m)), float)
        self_term = np.einsum("km,k->m", w, env.values)
        w_f = sample(params.law_W, rng, size=m) if z_f > 0 else 0.0
    return q * self_term + z_f * np.asarray(w_f, float)


def _sample_G_impl(params: ModelParams, env: Environment | None,
                   rng: np.random.Generator, size):
    if env is not None:
        env.check_dims(params)
    scalar = size is None
    total = 1 if scalar else int(size)
    per_chunk = max(1, _CHUNK // (params.n - 1))
    out = np.empty(total, dtype=float)
    done = 0
    while done < total:
        m = min(per_chunk, total - done)
        out[done:done + m] = _sample_G_chunk(params, env, rng, m)
        done += m
    return float(out[0]) if scalar else out


def sample_G(params: ModelParams, rng: np.random.Generator, size=None):
    """Draw the total stimulation rate G_n(z_f); all coordinates i.i.d."""
    return _sample_G_impl(params, None, rng, size)


def sample_G_given(params: ModelParams, env: Environment,
                   rng: np.random.Generator, size=None):
    """Draw G_n(z_f) conditionally on a fixed environment.

    The per-peptide draw order matches :func:`sample_G` (constitutive
    block, then variable block, then receptor side), so with a degenerate
    stimulation-rate law the conditional and unconditional streams agree
    draw for draw.
    """
    return _sample_G_impl(params, env, rng, size)


def config_digest(obj) -> str:
    """Stable hash of a JSON-serializable configuration object."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
