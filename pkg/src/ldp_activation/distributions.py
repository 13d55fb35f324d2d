"""Bounded probability laws with moment-generating-function calculus.

Copy numbers and stimulation rates are bounded nonnegative random
variables.  Boundedness makes every moment generating function entire, so
``log_mgf`` and its first two derivatives are finite for any real tilt.
The native representation is a finite weighted support; continuous
families (scaled beta) are admitted through fixed-node Gauss-Legendre
quadrature, which converges fast on a bounded interval and keeps every
downstream computation (tilting, exact enumeration, importance sampling)
on one code path.

Derivatives of the log-MGF are computed from tilted-moment ratios
(tilted mean and tilted variance), never by finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betaln

from .errors import ConfigError, DomainError

#: Tolerance for probabilities summing to one.
PROB_TOL = 1e-12
#: Tolerance for detecting arithmetic-progression (lattice) supports.
LATTICE_TOL = 1e-9
#: Default Gauss-Legendre node count for scaled-continuous laws.
DEFAULT_NODES = 128


# ---------------------------------------------------------------------------
# lattice detection helpers (shared with the exact-enumeration oracle)
# ---------------------------------------------------------------------------

def _float_gcd(a: float, b: float, tol: float) -> float:
    """Greatest common divisor of two nonnegative floats at tolerance ``tol``."""
    a, b = abs(a), abs(b)
    while b > tol:
        r = math.fmod(a, b)
        # fmod can land within rounding error of either end of [0, b)
        if r < tol or b - r < tol:
            r = 0.0
        a, b = b, r
    return a


def lattice_span(values: np.ndarray, tol: float = LATTICE_TOL) -> float | None:
    """Span of the arithmetic progression carrying ``values``, else None.

    Returns 0.0 for a single (degenerate) support point.  A positive span
    ``d`` means every value equals ``min(values) + k*d`` for integer ``k``
    within ``tol``.
    """
    uniq = np.unique(np.asarray(values, dtype=float))
    if uniq.size == 1:
        return 0.0
    diffs = uniq[1:] - uniq[0]
    g = 0.0
    for d in diffs:
        g = _float_gcd(g, float(d), tol)
        if g < tol:
            return None
    k = np.rint(diffs / g)
    if np.max(np.abs(diffs - k * g)) > tol:
        return None
    return g


def sum_lattice(
    summands: list[tuple[np.ndarray, int]], tol: float = LATTICE_TOL
) -> tuple[float, float] | None:
    """Lattice (span, origin) of a sum of independent finite-support terms.

    ``summands`` lists (support, multiplicity) pairs; the sum of all terms
    lives on ``origin + k*span`` with ``origin`` the sum of the per-term
    minima.  Returns span 0.0 when every term is degenerate, and None when
    the supports are incommensurable at tolerance ``tol``.
    """
    origin = 0.0
    g = 0.0
    offsets: list[np.ndarray] = []
    for support, count in summands:
        support = np.asarray(support, dtype=float)
        lo = float(support.min())
        origin += count * lo
        off = np.unique(support) - lo
        off = off[off > tol]
        if off.size:
            offsets.append(off)
            for d in off:
                g = _float_gcd(g, float(d), tol)
                if g < tol:
                    return None
    if not offsets:
        return 0.0, origin
    for off in offsets:
        k = np.rint(off / g)
        if np.max(np.abs(off - k * g)) > tol:
            return None
    return g, origin


# ---------------------------------------------------------------------------
# the law itself
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BoundedDistribution:
    """A bounded law on [lower, upper] with finite weighted support.

    ``kind`` is "discrete" for genuinely atomic laws and "scaled_beta" for
    the quadrature representation of a beta density stretched to
    [0, max]; in the latter case ``support``/``probs`` hold the
    Gauss-Legendre nodes and weights and ``family`` keeps the shape
    parameters for exact sampling and serialization.
    """

    support: np.ndarray
    probs: np.ndarray
    kind: str = "discrete"
    lower: float = 0.0
    upper: float = 0.0
    family: dict = field(default_factory=dict)

    def __post_init__(self):
        support = np.atleast_1d(np.asarray(self.support, dtype=float))
        probs = np.atleast_1d(np.asarray(self.probs, dtype=float))
        if support.ndim != 1 or support.shape != probs.shape:
            raise ConfigError("support and probs must be 1-d arrays of equal length")
        if support.size == 0:
            raise ConfigError("support must be non-empty")
        if not np.all(np.isfinite(support)):
            raise ConfigError("support points must be finite")
        if np.any(support < 0):
            raise ConfigError("support points must be nonnegative")
        if np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise ConfigError("probabilities must be finite and nonnegative")
        total = float(probs.sum())
        if abs(total - 1.0) > PROB_TOL:
            raise ConfigError(
                f"probabilities must sum to 1 within {PROB_TOL:g} (got {total!r})"
            )
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs / total)
        lo = float(self.lower) if self.lower else float(support.min())
        hi = float(self.upper) if self.upper else float(support.max())
        lo = min(lo, float(support.min()))
        hi = max(hi, float(support.max()))
        if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
            raise ConfigError("invalid support bounds")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    # -- flags ------------------------------------------------------------

    @property
    def is_degenerate(self) -> bool:
        return np.unique(self.support).size == 1

    @property
    def span(self) -> float | None:
        """Lattice span (0.0 if degenerate), or None if not a lattice law."""
        if self.kind != "discrete":
            return None
        return lattice_span(self.support)

    @property
    def is_lattice(self) -> bool:
        s = self.span
        return s is not None

    # -- moments ----------------------------------------------------------

    @property
    def mean(self) -> float:
        return float(self.probs @ self.support)

    @property
    def variance(self) -> float:
        m = self.mean
        return max(float(self.probs @ (self.support - m) ** 2), 0.0)

    def scaled(self, factor: float) -> "BoundedDistribution":
        """The law of ``factor * X`` (factor >= 0)."""
        if factor < 0:
            raise DomainError("scale factor must be nonnegative")
        return BoundedDistribution(
            support=self.support * factor,
            probs=self.probs,
            kind="discrete" if factor == 0 else self.kind,
            lower=self.lower * factor,
            upper=self.upper * factor,
            family={},
        )


@dataclass(frozen=True)
class MomentSummary:
    mean: float
    variance: float
    upper: float


def moment_summary(dist: BoundedDistribution) -> MomentSummary:
    return MomentSummary(mean=dist.mean, variance=dist.variance, upper=dist.upper)


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def discrete(support, probs) -> BoundedDistribution:
    """Finite-discrete law from support points and probabilities."""
    return BoundedDistribution(np.asarray(support, float), np.asarray(probs, float))


def degenerate(value: float) -> BoundedDistribution:
    """Point mass at ``value``."""
    return discrete([value], [1.0])


def two_point(x0: float, x1: float, p1: float = 0.5) -> BoundedDistribution:
    """Law taking value ``x1`` with probability ``p1`` and ``x0`` otherwise."""
    return discrete([x0, x1], [1.0 - p1, p1])


def scaled_beta(
    alpha: float, beta: float, maximum: float, nodes: int = DEFAULT_NODES
) -> BoundedDistribution:
    """Beta(alpha, beta) stretched to [0, maximum], on Gauss-Legendre nodes."""
    if alpha <= 0 or beta <= 0:
        raise ConfigError("beta shape parameters must be positive")
    if maximum <= 0:
        raise ConfigError("scaled-beta maximum must be positive")
    if nodes < 2:
        raise ConfigError("need at least 2 quadrature nodes")
    t, w = np.polynomial.legendre.leggauss(int(nodes))
    u = 0.5 * (t + 1.0)  # nodes in (0, 1)
    logpdf = (
        (alpha - 1.0) * np.log(u)
        + (beta - 1.0) * np.log1p(-u)
        - betaln(alpha, beta)
    )
    weights = 0.5 * w * np.exp(logpdf)
    return BoundedDistribution(
        support=u * maximum,
        probs=weights / weights.sum(),
        kind="scaled_beta",
        lower=0.0,
        upper=float(maximum),
        family={"alpha": float(alpha), "beta": float(beta), "max": float(maximum),
                "nodes": int(nodes)},
    )


def product_law(z_law: BoundedDistribution, w_law: BoundedDistribution) -> BoundedDistribution:
    """Law of Z*W for independent Z and W.

    The outer product keeps Z-major ordering and does not collapse
    duplicate values, so that conditioning on a degenerate factor leaves
    the support array (and hence any sampling stream built on it)
    unchanged.
    """
    values = np.multiply.outer(z_law.support, w_law.support).ravel()
    probs = np.multiply.outer(z_law.probs, w_law.probs).ravel()
    return BoundedDistribution(
        support=values,
        probs=probs,
        kind="discrete" if (z_law.kind == w_law.kind == "discrete") else "scaled_beta",
        lower=z_law.lower * w_law.lower,
        upper=z_law.upper * w_law.upper,
        family={},
    )


# ---------------------------------------------------------------------------
# MGF calculus
# ---------------------------------------------------------------------------

def _check_theta(theta):
    t = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(t)):
        raise DomainError("tilt parameter theta must be finite")
    return t


def log_mgf(dist: BoundedDistribution, theta):
    """ln E[exp(theta X)], exact summation over the weighted support.

    ``theta`` may be a scalar or an ndarray; the result matches its shape.
    """
    t = _check_theta(theta)
    scalar = t.ndim == 0
    t2 = np.atleast_1d(t)
    expo = t2[..., None] * dist.support
    m = expo.max(axis=-1, keepdims=True)
    out = np.log(np.sum(dist.probs * np.exp(expo - m), axis=-1)) + m[..., 0]
    return float(out[0]) if scalar else out.reshape(t.shape)


def _tilted_moments(dist: BoundedDistribution, theta):
    t = _check_theta(theta)
    scalar = t.ndim == 0
    t2 = np.atleast_1d(t)
    expo = t2[..., None] * dist.support
    expo -= expo.max(axis=-1, keepdims=True)
    w = dist.probs * np.exp(expo)
    w /= w.sum(axis=-1, keepdims=True)
    mean = w @ dist.support
    var = np.sum(w * (dist.support - mean[..., None]) ** 2, axis=-1)
    var = np.maximum(var, 0.0)
    if scalar:
        return float(mean[0]), float(var[0])
    return mean.reshape(t.shape), var.reshape(t.shape)


def dlog_mgf(dist: BoundedDistribution, theta):
    """First derivative of :func:`log_mgf` (the tilted mean)."""
    return _tilted_moments(dist, theta)[0]


def d2log_mgf(dist: BoundedDistribution, theta):
    """Second derivative of :func:`log_mgf` (the tilted variance)."""
    return _tilted_moments(dist, theta)[1]


def tilted_probs(dist: BoundedDistribution, theta: float) -> np.ndarray:
    """Probability weights of the theta-tilted law on the same support."""
    t = float(_check_theta(theta))
    expo = t * dist.support
    expo -= expo.max()
    w = dist.probs * np.exp(expo)
    return w / w.sum()


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def sample(dist: BoundedDistribution, rng: np.random.Generator, size=None):
    """Draw from the law; deterministic given the generator state.

    Degenerate laws return their constant without consuming randomness, so
    conditioning on a degenerate environment reproduces the unconditional
    stream draw for draw.
    """
    if dist.kind == "scaled_beta":
        fam = dist.family
        return fam["max"] * rng.beta(fam["alpha"], fam["beta"], size=size)
    if dist.is_degenerate:
        value = float(dist.support[0])
        if size is None:
            return value
        return np.full(size, value, dtype=float)
    return rng.choice(dist.support, size=size, p=dist.probs)


# ---------------------------------------------------------------------------
# stimulation rates from dissociation rates
# ---------------------------------------------------------------------------

def stimulation_rate_from_dissociation(r, t_star: float = 0.0):
    """Long-run supra-threshold stimulation rate for exponential binding.

    A bond with dissociation rate ``r`` has exponential duration T with
    E[T] = 1/r, so the renewal rate of bindings outlasting ``t_star`` is
    P(T > t_star) / E[T] = r * exp(-r * t_star).
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0) or not np.all(np.isfinite(r)):
        raise DomainError("dissociation rate must be positive and finite")
    if t_star < 0:
        raise DomainError("threshold time must be nonnegative")
    out = r * np.exp(-r * t_star)
    return float(out) if out.ndim == 0 else out


def stimulation_rate_law(
    r_law: BoundedDistribution, t_star: float = 0.0
) -> BoundedDistribution:
    """Push a dissociation-rate law through the stimulation-rate map.

    For a quadrature-backed rate law this yields the node image, i.e. the
    same fixed-node representation used everywhere else.
    """
    values = stimulation_rate_from_dissociation(r_law.support, t_star)
    return BoundedDistribution(
        support=values, probs=r_law.probs, kind="discrete",
        lower=float(np.min(values)), upper=float(np.max(values)),
    )


# ---------------------------------------------------------------------------
# JSON config form
# ---------------------------------------------------------------------------

def dist_from_config(cfg: dict) -> BoundedDistribution:
    """Build a law from its JSON object form.

    ``{"kind": "discrete", "support": [...], "probs": [...]}`` or
    ``{"kind": "scaled_beta", "alpha": a, "beta": b, "max": m[, "nodes": k]}``.
    """
    if not isinstance(cfg, dict) or "kind" not in cfg:
        raise ConfigError("distribution config must be an object with a 'kind'")
    kind = cfg["kind"]
    if kind == "discrete":
        try:
            return discrete(cfg["support"], cfg["probs"])
        except KeyError as exc:
            raise ConfigError(f"discrete law needs {exc.args[0]!r}") from None
    if kind == "scaled_beta":
        try:
            return scaled_beta(
                cfg["alpha"], cfg["beta"], cfg["max"],
                nodes=cfg.get("nodes", DEFAULT_NODES),
            )
        except KeyError as exc:
            raise ConfigError(f"scaled_beta law needs {exc.args[0]!r}") from None
    raise ConfigError(f"unknown distribution kind {kind!r}")


def dist_to_config(dist: BoundedDistribution) -> dict:
    if dist.kind == "scaled_beta":
        return {"kind": "scaled_beta", **dist.family}
    return {
        "kind": "discrete",
        "support": [float(x) for x in dist.support],
        "probs": [float(p) for p in dist.probs],
    }
