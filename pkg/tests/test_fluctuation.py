import numpy as np
import pytest

import ldp_activation as ldp
from ldp_activation.errors import DomainError
from conftest import medium_model


def grid_for(params, fractions=(1.08, 1.16, 1.24)):
    mean_slope = ldp.moments_annealed(params).mean / params.n
    return [f * mean_slope for f in fractions]


class TestNormalityDiagnostic:
    def test_gaussian_samples_pass(self):
        hits = 0
        for seed in range(40):
            x = ldp.derive_rng(seed, 0).standard_normal(10_000)
            hits += ldp.normality_diagnostic(x) > 0.01
        assert hits >= 38  # >= 95% of seeds

    def test_uniform_samples_fail(self):
        hits = 0
        for seed in range(40):
            x = ldp.derive_rng(seed, 1).uniform(size=10_000)
            hits += ldp.normality_diagnostic(x) < 0.01
        assert hits >= 38

    def test_degenerate_input_rejected(self):
        with pytest.raises(DomainError):
            ldp.normality_diagnostic(np.ones(500))

    def test_insufficient_samples_rejected(self):
        with pytest.raises(DomainError):
            ldp.normality_diagnostic(np.arange(50, dtype=float))


class TestSimulateFluctuation:
    def test_degenerate_conditioning_law_is_silent(self):
        p = ldp.ModelParams(
            n_c=50, n_v=50, z_f=0.0,
            law_Zc=ldp.discrete([1, 2], [0.5, 0.5]),
            law_Zv=ldp.discrete([1, 2], [0.5, 0.5]),
            law_W=ldp.degenerate(1.0), a=1.6, seed=5)
        report = ldp.simulate_fluctuation(p, "R", [1.6, 1.7], 150,
                                          ldp.derive_rng(5, 0))
        assert np.all(report.empirical_cov == 0.0)
        assert np.all(report.predicted_cov == 0.0)
        assert all(np.isnan(pv) for pv in report.normality_pvalues)

    def test_covariance_matches_prediction(self):
        p = medium_model(n_c=50, n_v=50)
        report = ldp.simulate_fluctuation(p, "R", grid_for(p), 600,
                                          ldp.derive_rng(7, 0))
        err = np.abs(report.empirical_cov - report.predicted_cov)
        assert np.all(err <= 5.0 * report.jackknife_se)
        assert report.max_abs_cov_error == pytest.approx(float(err.max()))

    def test_presentation_side_covariance(self):
        p = medium_model(n_c=50, n_v=50)
        report = ldp.simulate_fluctuation(p, "Z", grid_for(p, (1.1, 1.2)), 600,
                                          ldp.derive_rng(7, 1))
        err = np.abs(report.empirical_cov - report.predicted_cov)
        assert np.all(err <= 5.0 * report.jackknife_se)

    def test_matrices_symmetric_and_psd(self):
        p = medium_model(n_c=40, n_v=40)
        report = ldp.simulate_fluctuation(p, "R", grid_for(p), 200,
                                          ldp.derive_rng(9, 0))
        assert np.array_equal(report.empirical_cov, report.empirical_cov.T)
        assert np.array_equal(report.predicted_cov, report.predicted_cov.T)
        assert np.min(report.eigenvalues_predicted) >= -1e-10
        assert np.min(report.eigenvalues_empirical) >= -1e-10

    def test_error_shrinks_with_replicas(self):
        p = medium_model(n_c=40, n_v=40)
        grid = grid_for(p, (1.1, 1.2))
        small = ldp.simulate_fluctuation(p, "R", grid, 150, ldp.derive_rng(11, 0))
        large = ldp.simulate_fluctuation(p, "R", grid, 2400, ldp.derive_rng(11, 1))
        assert large.max_abs_cov_error < small.max_abs_cov_error

    def test_invalid_grid_points_reported(self):
        p = medium_model(n_c=40, n_v=40)
        mean_slope = ldp.moments_annealed(p).mean / p.n
        report = ldp.simulate_fluctuation(
            p, "R", [0.5 * mean_slope, 1.15 * mean_slope], 150,
            ldp.derive_rng(13, 0))
        assert report.valid == (False, True)
        assert "BelowMean" in report.point_errors[0]
        assert report.empirical_cov.shape == (1, 1)

    def test_replica_floor(self):
        p = medium_model(n_c=40, n_v=40)
        with pytest.raises(DomainError):
            ldp.simulate_fluctuation(p, "R", grid_for(p), 50, ldp.derive_rng(1, 0))

    def test_report_serializes(self):
        p = medium_model(n_c=30, n_v=30)
        report = ldp.simulate_fluctuation(p, "R", grid_for(p, (1.12,)), 120,
                                          ldp.derive_rng(15, 0))
        payload = report.to_json()
        assert payload["replicas"] == 120
        assert len(payload["empirical_cov"]) == 1
        assert payload["normality_pvalues"][0] is None or isinstance(
            payload["normality_pvalues"][0], float)
