"""Sharp large-deviation approximations of T-cell activation probabilities.

The package models the total stimulation rate a T-cell receives from an
antigen presenting cell, solves the associated tilting equations, and
evaluates sharp (prefactor-level) tail approximations in three regimes:
annealed, quenched on the receptor, and quenched on the presentation
profile.  Every formula can be validated against exact enumeration,
naive Monte Carlo and tilted importance sampling.
"""

from .annealed import (
    ActivationEstimate,
    AnnealedAssembly,
    assemble_annealed,
    probability_annealed,
    rate_annealed,
    ratio_annealed,
)
from .distributions import (
    BoundedDistribution,
    MomentSummary,
    d2log_mgf,
    degenerate,
    discrete,
    dist_from_config,
    dist_to_config,
    dlog_mgf,
    log_mgf,
    moment_summary,
    product_law,
    sample,
    scaled_beta,
    stimulation_rate_from_dissociation,
    stimulation_rate_law,
    two_point,
)
from .errors import (
    BelowMeanError,
    ConfigError,
    DecompositionError,
    DomainError,
    LdpError,
    SaturationError,
    ValidityWarning,
)
from .fluctuation import FluctuationReport, normality_diagnostic, simulate_fluctuation
from .model import (
    AnnealedMoments,
    Environment,
    ModelParams,
    conditional_moments,
    derived_constants,
    moments_annealed,
    moments_quenched_R,
    moments_quenched_Z,
    normal_interval,
    sample_environment,
    sample_G,
    sample_G_given,
)
from .oracle import OracleEstimate, exact_tail, naive_mc, sample_totals, tilted_is
from .quenched import (
    QuenchedAssembly,
    RateDecomposition,
    assemble_quenched,
    decompose_rate,
    probability_quenched,
    rate_quenched,
    ratio_quenched_R,
    ratio_quenched_Z,
)
from .streams import derive_rng
from .tilt import CumulantFunction, TiltSolution, legendre_value, solve_tilt

__version__ = "0.1.0"

__all__ = [
    "ActivationEstimate", "AnnealedAssembly", "AnnealedMoments",
    "BelowMeanError", "BoundedDistribution", "ConfigError", "CumulantFunction",
    "DecompositionError", "DomainError", "Environment", "FluctuationReport",
    "LdpError", "ModelParams", "MomentSummary", "OracleEstimate",
    "QuenchedAssembly", "RateDecomposition", "SaturationError", "TiltSolution",
    "ValidityWarning",
    "assemble_annealed", "assemble_quenched", "conditional_moments",
    "d2log_mgf", "decompose_rate", "degenerate", "derive_rng",
    "derived_constants", "discrete", "dist_from_config", "dist_to_config",
    "dlog_mgf", "exact_tail", "legendre_value", "log_mgf", "moment_summary",
    "moments_annealed", "moments_quenched_R", "moments_quenched_Z",
    "naive_mc", "normal_interval", "normality_diagnostic",
    "probability_annealed", "probability_quenched", "product_law",
    "rate_annealed", "rate_quenched", "ratio_annealed", "ratio_quenched_R",
    "ratio_quenched_Z", "sample", "sample_G", "sample_G_given",
    "sample_environment", "sample_totals", "scaled_beta",
    "simulate_fluctuation", "solve_tilt", "stimulation_rate_from_dissociation",
    "stimulation_rate_law", "tilted_is", "two_point",
]
