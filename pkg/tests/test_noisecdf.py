"""Kernel CDF estimation from exploration residuals."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pricelab.market import (
    mean_utility,
    noise_cdf_true,
    quadratic_sim_env,
    sample_context,
    sample_noise,
)
from pricelab.neighbors import LabeledSample
from pricelab.noisecdf import (
    CdfEstimate,
    OutOfWindowError,
    bandwidth,
    cdf_deriv_estimate,
    cdf_deriv_floored,
    cdf_estimate,
    fit_cdf,
    fused_evaluator,
    kernel_deriv,
    kernel_eval,
    nw_components,
    scale_kernel,
    smoothing_kernel,
)

ENV = quadratic_sim_env()


def exploration_data(n, seed_i):
    """Uniform-price exploration sample from the quadratic environment."""
    rng = np.random.default_rng(np.random.SeedSequence([915, seed_i]))
    x = sample_context(rng, ENV, size=n)
    p = rng.uniform(0.0, ENV.price_bound, n)
    eps = sample_noise(rng, ENV.noise, n)
    y = (mean_utility(ENV, x) + eps >= p).astype(float)
    return LabeledSample.from_exploration(x, p, y, ENV.price_bound)


def oracle_mu(x):
    return mean_utility(ENV, x)


def synthetic_estimate(residuals, sales, b=1.0, kernel=None):
    data = LabeledSample.from_exploration(
        np.zeros((len(residuals), 1)), np.asarray(residuals, dtype=float),
        np.asarray(sales, dtype=float), ENV.price_bound,
    )
    return fit_cdf(data, lambda x: 0.0, b, kernel=kernel)


class TestKernel:
    def test_reference_values(self):
        spec = smoothing_kernel()
        assert kernel_eval(spec, 0.0) == pytest.approx(1.0, abs=1e-15)
        assert kernel_eval(spec, 0.5) == pytest.approx(27.0 / 768.0, abs=1e-15)
        assert kernel_eval(spec, -0.5) == pytest.approx(27.0 / 768.0, abs=1e-15)
        assert kernel_eval(spec, 0.51) == 0.0
        assert kernel_eval(spec, -3.0) == 0.0

    def test_symmetry(self):
        spec = smoothing_kernel()
        u = np.linspace(0.0, 0.6, 61)
        np.testing.assert_allclose(
            kernel_eval(spec, u), kernel_eval(spec, -u), atol=1e-15
        )

    def test_derivative_matches_finite_differences(self):
        spec = smoothing_kernel()
        u = np.linspace(-0.49, 0.49, 99)
        h = 1e-6
        numeric = (kernel_eval(spec, u + h) - kernel_eval(spec, u - h)) / (2 * h)
        np.testing.assert_allclose(kernel_deriv(spec, u), numeric, atol=1e-6)
        assert kernel_deriv(spec, 0.0) == 0.0
        assert kernel_deriv(spec, 0.8) == 0.0

    def test_scaled_kernel_multiplies_values(self):
        base = smoothing_kernel()
        tripled = scale_kernel(base, 3.0)
        u = np.linspace(-0.6, 0.6, 25)
        np.testing.assert_allclose(
            kernel_eval(tripled, u), 3.0 * kernel_eval(base, u), atol=1e-15
        )
        np.testing.assert_allclose(
            kernel_deriv(tripled, u), 3.0 * kernel_deriv(base, u), atol=1e-15
        )

    def test_scale_factor_must_be_positive(self):
        with pytest.raises(ValueError, match="positive"):
            scale_kernel(smoothing_kernel(), 0.0)


class TestBandwidth:
    def test_reference_values(self):
        assert bandwidth(1, 2, 6.0) == pytest.approx(6.0, abs=1e-12)
        assert bandwidth(3125, 2, 6.0) == pytest.approx(1.2, abs=1e-12)
        assert bandwidth(96, 2, 6.0) == pytest.approx(6.0 * 96 ** (-0.2), abs=1e-12)

    def test_smoother_noise_means_wider_bandwidth(self):
        assert bandwidth(1000, 4, 6.0) > bandwidth(1000, 2, 6.0)

    def test_shrinks_with_sample_size(self):
        assert bandwidth(4000, 2, 6.0) < bandwidth(400, 2, 6.0)

    def test_validation(self):
        with pytest.raises(ValueError, match="at least 1"):
            bandwidth(0, 2, 6.0)
        with pytest.raises(ValueError, match="at least 2"):
            bandwidth(100, 1, 6.0)
        with pytest.raises(ValueError, match="positive"):
            bandwidth(100, 2, 0.0)


class TestComponents:
    def test_single_point(self):
        data = LabeledSample.from_exploration(
            np.zeros((1, 1)), np.array([0.5]), np.array([1.0]), 6.5
        )
        a, xi = nw_components(data, lambda x: 0.0, 0.5, 1.0)
        assert a == pytest.approx(1.0, abs=1e-15)
        assert xi == pytest.approx(1.0, abs=1e-15)

    def test_no_sales_zero_numerator(self):
        data = LabeledSample.from_exploration(
            np.zeros((3, 1)), np.array([0.4, 0.5, 0.6]), np.zeros(3), 6.5
        )
        a, xi = nw_components(data, lambda x: 0.0, 0.5, 1.0)
        assert a == 0.0
        assert xi > 0.0

    def test_symmetric_pair_ratio(self):
        data = LabeledSample.from_exploration(
            np.zeros((2, 1)), np.array([0.4, 0.6]), np.array([0.0, 1.0]), 6.5
        )
        a, xi = nw_components(data, lambda x: 0.0, 0.5, 1.0)
        assert a / xi == pytest.approx(0.5, abs=1e-15)


class TestCdfEstimate:
    def test_requires_exploration_fields(self):
        plain = LabeledSample(np.zeros((3, 1)), np.zeros(3))
        with pytest.raises(ValueError, match="exploration data"):
            fit_cdf(plain, lambda x: 0.0, 1.0)

    def test_validation(self):
        data = exploration_data(20, 0)
        with pytest.raises(ValueError, match="bandwidth must be positive"):
            fit_cdf(data, oracle_mu, 0.0)
        with pytest.raises(ValueError, match="floor must be positive"):
            fit_cdf(data, oracle_mu, 1.0, eps_floor=0.0)

    def test_all_sales_give_zero(self):
        est = synthetic_estimate(np.linspace(0.0, 1.0, 9), np.ones(9))
        assert cdf_estimate(est, 0.5) == pytest.approx(0.0, abs=1e-15)

    def test_no_sales_give_one(self):
        est = synthetic_estimate(np.linspace(0.0, 1.0, 9), np.zeros(9))
        assert cdf_estimate(est, 0.5) == pytest.approx(1.0, abs=1e-15)

    def test_boundary_extension(self):
        est = synthetic_estimate(np.array([-0.1, 0.0, 0.1]), np.array([1.0, 1.0, 0.0]), b=0.2)
        assert cdf_estimate(est, -5.0) == 0.0
        assert cdf_estimate(est, 5.0) == 1.0

    def test_vectorized_matches_scalar(self):
        est = fit_cdf(exploration_data(300, 1), oracle_mu, bandwidth(300, 2, 3.0))
        z = np.linspace(-1.0, 1.0, 41)
        scal = np.array([cdf_estimate(est, float(v)) for v in z])
        np.testing.assert_allclose(cdf_estimate(est, z), scal, atol=1e-15)

    @given(st.integers(0, 10**6), st.floats(-8.0, 8.0, allow_nan=False))
    @settings(max_examples=40, deadline=None)
    def test_estimate_stays_in_unit_interval(self, seed, z):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 60))
        est = synthetic_estimate(
            rng.uniform(-2.0, 2.0, n), (rng.uniform(size=n) < 0.5).astype(float),
            b=float(rng.uniform(0.1, 2.0)),
        )
        assert 0.0 <= cdf_estimate(est, z) <= 1.0

    def test_consistency_at_moderate_sample(self):
        est = fit_cdf(exploration_data(5000, 0), oracle_mu, bandwidth(5000, 2, 3.0))
        assert cdf_estimate(est, 0.0) == pytest.approx(0.5, abs=0.05)

    def test_mean_shift_moves_the_argument(self):
        data = exploration_data(400, 2)
        b = bandwidth(400, 2, 3.0)
        base = fit_cdf(data, oracle_mu, b)
        for delta in (-0.35, 0.2):
            shifted = fit_cdf(data, lambda x: oracle_mu(x) + delta, b)
            for z in (-0.3, 0.0, 0.25):
                assert cdf_estimate(shifted, z) == pytest.approx(
                    cdf_estimate(base, z + delta), abs=1e-12
                )


class TestDerivative:
    def test_out_of_window_raises(self):
        est = synthetic_estimate(np.array([0.0, 0.2]), np.array([1.0, 0.0]), b=0.5)
        with pytest.raises(OutOfWindowError):
            cdf_deriv_estimate(est, 50.0)

    def test_floored_version_covers_gaps(self):
        est = synthetic_estimate(np.array([0.0, 0.2]), np.array([1.0, 0.0]), b=0.5)
        assert cdf_deriv_floored(est, 50.0) == est.eps_floor

    def test_floor_applies_in_window(self):
        # symmetric responses make the raw derivative exactly zero at 0
        est = synthetic_estimate(np.array([-0.3, 0.3]), np.array([1.0, 1.0]))
        assert cdf_deriv_estimate(est, 0.0) == 0.0
        assert cdf_deriv_floored(est, 0.0) == est.eps_floor

    def test_consistency_at_moderate_sample(self):
        est = fit_cdf(exploration_data(5000, 0), oracle_mu, bandwidth(5000, 2, 3.0))
        assert cdf_deriv_estimate(est, 0.0) == pytest.approx(1.5, abs=0.3)

    def test_vectorized_matches_scalar(self):
        est = fit_cdf(exploration_data(300, 1), oracle_mu, bandwidth(300, 2, 3.0))
        z = np.linspace(-0.4, 0.4, 17)
        scal = np.array([cdf_deriv_estimate(est, float(v)) for v in z])
        np.testing.assert_allclose(cdf_deriv_estimate(est, z), scal, atol=1e-15)


class TestKernelScaleInvariance:
    def test_estimates_ignore_kernel_normalization(self):
        data = exploration_data(400, 3)
        b = bandwidth(400, 2, 3.0)
        base = fit_cdf(data, oracle_mu, b)
        scaled = fit_cdf(data, oracle_mu, b, kernel=scale_kernel(smoothing_kernel(), 3.0))
        for z in np.linspace(-0.45, 0.45, 31):
            z = float(z)
            assert cdf_estimate(scaled, z) == pytest.approx(
                cdf_estimate(base, z), abs=1e-12
            )
            assert cdf_deriv_estimate(scaled, z) == pytest.approx(
                cdf_deriv_estimate(base, z), abs=1e-12
            )


class TestFusedEvaluator:
    @pytest.mark.parametrize("scale", [None, 3.0])
    def test_matches_separate_calls(self, scale):
        kernel = None if scale is None else scale_kernel(smoothing_kernel(), scale)
        est = fit_cdf(exploration_data(400, 4), oracle_mu, bandwidth(400, 2, 3.0),
                      kernel=kernel)
        fused = fused_evaluator(est)
        for z in np.linspace(-8.0, 8.0, 41):
            z = float(z)
            f, f1 = fused(z)
            assert f == pytest.approx(cdf_estimate(est, z), abs=1e-12)
            assert f1 == pytest.approx(cdf_deriv_floored(est, z), abs=1e-12)
