"""Shared model builders and small exact helpers for the test suite."""

from math import comb

import numpy as np
import pytest

import ldp_activation as ldp


def bernoulli_model(n: int, a: float = 0.75, z_f: float = 0.0) -> ldp.ModelParams:
    """Degenerate copy numbers and a fair two-point stimulation rate.

    The total G_n(0) is then a Binomial(n-1, 1/2) count, so exact tails
    come from direct summation of binomial coefficients.
    """
    n_c = (n - 1) // 2
    return ldp.ModelParams(
        n_c=n_c, n_v=n - 1 - n_c, z_f=z_f,
        law_Zc=ldp.degenerate(1.0), law_Zv=ldp.degenerate(1.0),
        law_W=ldp.two_point(0.0, 1.0, 0.5), a=a, seed=101,
    )


def binomial_tail(m: int, k: int) -> float:
    """P(Binomial(m, 1/2) >= k), exact."""
    return sum(comb(m, j) for j in range(max(k, 0), m + 1)) / 2.0 ** m


def mixed_model(n_c=6, n_v=5, z_f=0.0, seed=13) -> ldp.ModelParams:
    """Small all-discrete instance with a fine-grained stimulation law."""
    return ldp.ModelParams(
        n_c=n_c, n_v=n_v, z_f=z_f,
        law_Zc=ldp.discrete([1, 2], [0.5, 0.5]),
        law_Zv=ldp.discrete([1, 2], [0.5, 0.5]),
        law_W=ldp.discrete([0.25, 0.5, 0.75, 1.0], [0.25, 0.25, 0.25, 0.25]),
        a=1.0, seed=seed,
    )


def medium_model(n_c=200, n_v=199, z_f=0.0, seed=11) -> ldp.ModelParams:
    """n=400 instance used for quenched ensembles and decomposition."""
    return ldp.ModelParams(
        n_c=n_c, n_v=n_v, z_f=z_f,
        law_Zc=ldp.discrete([1, 2, 3], [0.3, 0.5, 0.2]),
        law_Zv=ldp.discrete([1, 2], [0.5, 0.5]),
        law_W=ldp.discrete([0.8, 1.0, 1.2], [0.25, 0.5, 0.25]),
        a=2.0, seed=seed,
    )


def balanced_R_environment(params: ldp.ModelParams, w_f: float) -> ldp.Environment:
    """Receptor environment whose per-block value counts hit the law's
    proportions exactly, so the realized tilt equals the ensemble tilt."""
    w = params.law_W
    blocks = []
    for count in (params.n_c, params.n_v):
        reps = np.rint(w.probs * count).astype(int)
        assert reps.sum() == count, "law probabilities must tile the block size"
        blocks.append(np.repeat(w.support, reps))
    return ldp.Environment("R", np.concatenate(blocks + [[w_f]]))


def balanced_Z_environment(params: ldp.ModelParams) -> ldp.Environment:
    blocks = []
    for law, count in ((params.law_Zc, params.n_c), (params.law_Zv, params.n_v)):
        reps = np.rint(law.probs * count).astype(int)
        assert reps.sum() == count, "law probabilities must tile the block size"
        blocks.append(np.repeat(law.support, reps))
    return ldp.Environment("Z", np.concatenate(blocks))


@pytest.fixture
def rng():
    return ldp.derive_rng(20240817, 0)
