import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from mhtopt import (
    GaussianModel,
    InputError,
    McConfig,
    mvn_sample,
    norm_cdf,
    norm_quantile,
    poisson_binomial_pmf,
    poisson_binomial_sf,
)

from .conftest import phi_inv_oracle, phi_oracle


class TestNormCdf:
    def test_symmetry_at_zero(self):
        assert norm_cdf(0.0) == 0.5

    def test_95th_percentile_value(self):
        # oracle: high-precision erfc evaluation
        assert norm_cdf(1.6448536) == pytest.approx(0.95, abs=1e-7)
        assert norm_cdf(-1.6448536) == pytest.approx(0.05, abs=1e-7)

    def test_against_oracle_grid(self):
        for z in np.linspace(-8, 8, 161):
            assert norm_cdf(z) == pytest.approx(phi_oracle(z), abs=1e-12)

    def test_saturation(self):
        assert norm_cdf(40.0) == 1.0
        assert norm_cdf(-40.0) == 0.0
        assert norm_cdf(np.inf) == 1.0
        assert norm_cdf(-np.inf) == 0.0

    def test_vectorized(self):
        out = norm_cdf(np.array([0.0, 1.6448536269514722]))
        assert_allclose(out, [0.5, 0.95], atol=1e-12)


class TestNormQuantile:
    def test_median(self):
        assert norm_quantile(0.5) == 0.0

    @pytest.mark.parametrize(
        "p,expected", [(0.95, 1.6449), (0.99, 2.3263)]
    )
    def test_standard_critical_values(self, p, expected):
        # oracle: Newton iteration on the high-precision CDF
        assert norm_quantile(p) == pytest.approx(expected, abs=1e-4)
        assert norm_quantile(p) == pytest.approx(phi_inv_oracle(p), abs=1e-12)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.2, 1.5])
    def test_rejects_degenerate_probabilities(self, p):
        with pytest.raises(InputError):
            norm_quantile(p)

    def test_roundtrip_identity(self):
        # quantile(cdf(z)) = z within 1e-9 on [-6, 6]
        z = np.linspace(-6, 6, 241)
        back = norm_quantile(norm_cdf(z))
        assert np.max(np.abs(back - z)) <= 1e-9

    @given(st.floats(min_value=1e-8, max_value=1 - 1e-8))
    @settings(max_examples=200, deadline=None)
    def test_cdf_inverts_quantile(self, p):
        assert norm_cdf(norm_quantile(p)) == pytest.approx(p, abs=1e-12)


class TestGaussianModel:
    def test_valid_model(self):
        m = GaussianModel([0.0, 1.0], [[2.0, 0.5], [0.5, 1.0]])
        assert m.dim == 2
        assert not m.is_diagonal

    def test_rejects_asymmetric(self):
        with pytest.raises(InputError, match="symmetric"):
            GaussianModel([0.0, 0.0], [[1.0, 0.3], [0.2, 1.0]])

    def test_rejects_non_positive_definite(self):
        with pytest.raises(InputError, match="positive definite"):
            GaussianModel([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])

    def test_rejects_nonpositive_diagonal(self):
        with pytest.raises(InputError):
            GaussianModel([0.0], [[0.0]])

    def test_scalar_cov_promoted(self):
        m = GaussianModel([0.0], 1.0)
        assert m.cov.shape == (1, 1)


class TestMcConfig:
    def test_rejects_zero_draws(self):
        with pytest.raises(InputError):
            McConfig(0)

    def test_rejects_bad_seed(self):
        with pytest.raises(InputError):
            McConfig(10, seed=-1)


class TestMvnSample:
    def test_clt_bound_on_mean(self):
        # 4 sigma / sqrt(n) = 0.01265 for n = 1e5
        model = GaussianModel([0.0], [[1.0]])
        draws = mvn_sample(model, McConfig(100_000, seed=7))
        assert abs(draws.mean()) < 0.013

    def test_determinism(self):
        model = GaussianModel([0.0, 0.0], np.eye(2))
        cfg = McConfig(500, seed=42)
        assert np.array_equal(mvn_sample(model, cfg), mvn_sample(model, cfg))

    def test_streams_are_independent(self):
        model = GaussianModel([0.0, 0.0], np.eye(2))
        cfg = McConfig(500, seed=42)
        assert not np.array_equal(
            mvn_sample(model, cfg, stream=0), mvn_sample(model, cfg, stream=1)
        )

    def test_large_mean_tail_bound(self):
        model = GaussianModel([5.0, 5.0], [[2.0, 0.3], [0.3, 1.0]])
        draws = mvn_sample(model, McConfig(20_000, seed=3))
        assert np.all(draws.mean(axis=0) > 4.0)

    def test_antithetic_mean_is_exact(self):
        model = GaussianModel([1.0, -1.0], np.eye(2))
        draws = mvn_sample(model, McConfig(1000, antithetic=True, seed=1))
        assert_allclose(draws.mean(axis=0), [1.0, -1.0], atol=1e-14)

    def test_covariance_is_respected(self):
        cov = np.array([[2.0, 0.8], [0.8, 1.0]])
        model = GaussianModel([0.0, 0.0], cov)
        draws = mvn_sample(model, McConfig(200_000, seed=11))
        assert_allclose(np.cov(draws.T), cov, atol=0.03)


class TestPoissonBinomial:
    def test_matches_subset_enumeration(self, rng):
        # oracle: sum product probabilities over all 2^J rejection patterns
        from itertools import product

        p = rng.uniform(0.05, 0.9, size=5)
        pmf = poisson_binomial_pmf(p)
        expected = np.zeros(6)
        for pattern in product([0, 1], repeat=5):
            prob = np.prod([pi if b else 1 - pi for pi, b in zip(p, pattern)])
            expected[sum(pattern)] += prob
        assert_allclose(pmf, expected, atol=1e-14)

    def test_binomial_special_case(self):
        from scipy import stats as sps

        pmf = poisson_binomial_pmf(np.full(8, 0.3))
        assert_allclose(pmf, sps.binom.pmf(np.arange(9), 8, 0.3), atol=1e-13)

    @given(st.integers(min_value=0, max_value=6))
    @settings(max_examples=20, deadline=None)
    def test_sf_consistency(self, kappa):
        p = np.array([0.1, 0.5, 0.25, 0.8, 0.4])
        pmf = poisson_binomial_pmf(p)
        assert poisson_binomial_sf(p, kappa) == pytest.approx(
            pmf[kappa:].sum() if kappa <= 5 else 0.0, abs=1e-14
        )

    def test_grid_broadcasting(self):
        p = np.array([[0.1, 0.2], [0.5, 0.5]])
        pmf = poisson_binomial_pmf(p)
        assert pmf.shape == (2, 3)
        assert_allclose(pmf.sum(axis=1), [1.0, 1.0], atol=1e-14)
