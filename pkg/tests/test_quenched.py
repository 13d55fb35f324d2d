import math

import numpy as np
import pytest
from scipy import stats

import ldp_activation as ldp
from ldp_activation.annealed import assemble_annealed
from ldp_activation.errors import ConfigError, DomainError
from ldp_activation.quenched import (
    assemble_quenched,
    deterministic_cumulant,
    mean_cumulant,
)
from conftest import balanced_R_environment, medium_model, mixed_model


def degenerate_receptor_model(n_c=40, n_v=40, w0=1.0, z_f=0.0):
    return ldp.ModelParams(
        n_c=n_c, n_v=n_v, z_f=z_f,
        law_Zc=ldp.discrete([1, 2, 3], [0.3, 0.5, 0.2]),
        law_Zv=ldp.discrete([1, 2], [0.5, 0.5]),
        law_W=ldp.degenerate(w0), a=2.0, seed=19)


class TestAssembly:
    def test_degenerate_copy_numbers_make_linear_log_mgfs(self, rng):
        p = ldp.ModelParams(
            n_c=6, n_v=5, z_f=0.0, law_Zc=ldp.degenerate(1.0),
            law_Zv=ldp.degenerate(1.0), law_W=ldp.discrete([0.5, 1.0], [0.5, 0.5]),
            a=1.0, seed=3)
        env = ldp.sample_environment(p, "R", rng)
        asm = assemble_quenched(p, env)
        theta = 1.3
        expected = theta * env.w_self()
        assert np.allclose(asm.peptide_log_mgfs(theta), expected, atol=1e-12)

    def test_constant_presentation_profile_matches_annealed(self):
        p = ldp.ModelParams(
            n_c=30, n_v=30, z_f=0.0, law_Zc=ldp.degenerate(1.0),
            law_Zv=ldp.degenerate(1.0),
            law_W=ldp.discrete([0.5, 1.0, 1.5], [0.25, 0.5, 0.25]), a=1.0, seed=3)
        env = ldp.Environment("Z", np.ones(60))
        quenched = assemble_quenched(p, env)
        annealed = assemble_annealed(p)
        for t in (-0.7, 0.2, 1.1):
            assert quenched.cumulant.psi(t) == pytest.approx(
                annealed.cumulant.psi(t), rel=1e-12)

    def test_conditional_mean_against_monte_carlo(self, rng):
        p = medium_model(n_c=20, n_v=20).with_z_f(8.0)
        env = ldp.sample_environment(p, "R", rng)
        asm = assemble_quenched(p, env)
        draws = ldp.sample_G_given(p, env, ldp.derive_rng(4, 4), size=200_000)
        se = draws.std(ddof=1) / math.sqrt(draws.size)
        assert abs(asm.mean - draws.mean()) < 4 * se

    def test_dimension_mismatch(self):
        p = medium_model(n_c=4, n_v=4)
        with pytest.raises(ConfigError):
            assemble_quenched(p, ldp.Environment("Z", np.ones(5)))


class TestRate:
    def test_vacuous_conditioning_equals_annealed(self, rng):
        p = degenerate_receptor_model()
        env = ldp.sample_environment(p, "R", rng)
        quenched = ldp.rate_quenched(p, env, 2.4)
        annealed = ldp.rate_annealed(p, 2.4)
        assert quenched.rate == pytest.approx(annealed.rate, rel=1e-11)
        assert quenched.theta == pytest.approx(annealed.theta, rel=1e-9)

    def test_grid_search_oracle(self, rng):
        p = medium_model().with_z_f(20.0)
        env = ldp.sample_environment(p, "R", rng)
        asm = assemble_quenched(p, env)
        a = 1.2 * asm.mean / p.n
        sol = ldp.rate_quenched(p, env, a, asm)
        thetas = np.linspace(1e-4, 3.0, 24001)
        values = a * thetas - np.array([asm.cumulant.psi(float(t)) for t in thetas])
        assert sol.rate == pytest.approx(float(values.max()), abs=1e-6)

    def test_foreign_term_cannot_exceed_threshold(self):
        p = medium_model(n_c=20, n_v=20).with_z_f(30.0)
        w = np.full(41, 1.0)
        w[-1] = 1.2
        env = ldp.Environment("R", w)
        # a*n = 30 < z_f * W_f = 36
        with pytest.raises(DomainError):
            ldp.rate_quenched(p, env, 30.0 / p.n)


class TestProbability:
    def test_degenerate_environment_agrees_with_annealed(self, rng):
        p = degenerate_receptor_model()
        env = ldp.sample_environment(p, "R", rng)
        quenched = ldp.probability_quenched(p, env, 2.4)
        annealed = ldp.probability_annealed(p, 2.4)
        assert quenched.value == pytest.approx(annealed.value, rel=1e-9)

    def test_small_instance_vs_conditional_enumeration(self, rng):
        p = mixed_model()
        for kind in ("R", "Z"):
            env = ldp.sample_environment(p, kind, rng)
            asm = assemble_quenched(p, env)
            a = 1.18 * asm.mean / p.n
            est = ldp.probability_quenched(p, env, a)
            exact = ldp.exact_tail(p, env, a)
            assert est.diagnostics["theta_sqrt_n"] >= 3.0
            assert abs(est.value / exact.value - 1.0) <= 0.25, kind

    def test_medium_instance_vs_conditional_importance_sampling(self, rng):
        p = medium_model().with_z_f(20.0)
        env = ldp.sample_environment(p, "R", rng)
        asm = assemble_quenched(p, env)
        a = 1.12 * asm.mean / p.n
        est = ldp.probability_quenched(p, env, a)
        oracle = ldp.tilted_is(p, env, a, draws=40_000, seed=77)
        band = 3.0 * oracle.std_error + 0.10 * oracle.value
        assert abs(est.value - oracle.value) <= band

    def test_env_hash_recorded(self, rng):
        p = mixed_model()
        env = ldp.sample_environment(p, "R", rng)
        est = ldp.probability_quenched(p, env, 1.0)
        assert est.diagnostics["env_hash"] == env.digest()
        assert est.method == "sharp-quenched-R"


class TestDecomposition:
    def test_degenerate_environment_has_no_fluctuation(self, rng):
        p = degenerate_receptor_model(z_f=10.0)
        env = ldp.sample_environment(p, "R", rng)
        a = 2.4
        dec = ldp.decompose_rate(p, env, a)
        direct = ldp.rate_quenched(p, env, a)
        assert dec.Zn == pytest.approx(0.0, abs=1e-12)
        assert dec.remainder == pytest.approx(0.0, abs=1e-12)
        assert dec.I0 - dec.foreign_term == pytest.approx(direct.rate, rel=1e-10)

    def test_no_foreign_term_at_zero_load(self, rng):
        p = medium_model()
        env = ldp.sample_environment(p, "R", rng)
        dec = ldp.decompose_rate(p, env, 2.2)
        assert dec.foreign_term == 0.0
        # theta0 solves the deterministic tilt equation
        mc = mean_cumulant(p, "R")
        det = deterministic_cumulant(mc)
        assert det.dpsi(dec.theta0) == pytest.approx(2.2, abs=1e-9)

    def test_reconciles_with_direct_rate(self):
        p = medium_model().with_z_f(40.0)
        a = 1.15 * ldp.moments_annealed(p).mean / p.n
        misses = 0
        for i in range(40):
            env = ldp.sample_environment(p, "R", ldp.derive_rng(23, i))
            direct = ldp.rate_quenched(p, env, a).rate
            dec = ldp.decompose_rate(p, env, a)
            if abs(dec.total - direct) > 5.0 / p.n ** 2 + 1e-8:
                misses += 1
        assert misses <= 2

    def test_presentation_foreign_term_is_deterministic(self):
        p = medium_model().with_z_f(40.0)
        a = 1.1 * ldp.moments_annealed(p).mean / p.n
        terms = set()
        for i in range(5):
            env = ldp.sample_environment(p, "Z", ldp.derive_rng(29, i))
            terms.add(ldp.decompose_rate(p, env, a).foreign_term)
        assert len(terms) == 1

    def test_presentation_reconciles_with_direct_rate(self):
        p = medium_model().with_z_f(40.0)
        a = 1.12 * ldp.moments_annealed(p).mean / p.n
        misses = 0
        for i in range(20):
            env = ldp.sample_environment(p, "Z", ldp.derive_rng(31, i))
            direct = ldp.rate_quenched(p, env, a).rate
            dec = ldp.decompose_rate(p, env, a)
            if abs(dec.total - direct) > 5.0 / p.n ** 2 + 1e-8:
                misses += 1
        assert misses <= 1


class TestRatios:
    def test_neutral_at_zero(self, rng):
        p = medium_model()
        env = ldp.sample_environment(p, "R", rng)
        assert ldp.ratio_quenched_R(p, env, 2.2, 0.0) == 1.0
        assert ldp.ratio_quenched_Z(p, 2.2, 0.0) == 1.0

    def test_strong_receptor_grows_weak_receptor_decays(self, rng):
        p = medium_model()
        a = 2.1
        cut = a * p.n / p.n_M
        env = ldp.sample_environment(p, "R", rng)
        strong = ldp.Environment("R", np.append(env.w_self(), cut + 0.15))
        weak = ldp.Environment("R", np.append(env.w_self(), cut - 0.15))
        zs = (45.0, 70.0, 100.0)
        grow = [ldp.ratio_quenched_R(p, strong, a, z) for z in zs]
        decay = [ldp.ratio_quenched_R(p, weak, a, z) for z in zs]
        assert all(r > 1 for r in grow) and grow == sorted(grow)
        assert all(r < 1 for r in decay)

    def test_wrong_environment_kind(self, rng):
        p = medium_model()
        env = ldp.sample_environment(p, "Z", rng)
        with pytest.raises(ConfigError):
            ldp.ratio_quenched_R(p, env, 2.1, 50.0)

    def test_specificity_rank_correlation(self):
        # same self-environment, varying foreign stimulation rate only
        p = medium_model().with_z_f(30.0)
        base = ldp.sample_environment(p, "R", ldp.derive_rng(37, 0))
        a = 1.1 * ldp.moments_annealed(p).mean / p.n
        w_fs = np.linspace(p.law_W.lower, p.law_W.upper, 100)
        log_probs = []
        for w_f in w_fs:
            env = ldp.Environment("R", np.append(base.w_self(), w_f))
            log_probs.append(
                ldp.probability_quenched(p, env, a).diagnostics["log_probability"])
        rho = stats.spearmanr(w_fs, log_probs).statistic
        assert rho >= 0.9
