#!/usr/bin/env python3
"""
Tests for the embedding distribution families, their special functions and
the reparameterization gradients.
"""

import os
import sys
import unittest

import numpy as np
from scipy import special, stats

# Add parent directory to the Python path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from Embedding_Distribution import (
    BetaPerDim,
    ConfigError,
    DiagGaussian,
    DomainError,
    MixtureComponent,
    MixtureRepresentation,
    NoiseDraw,
    ShapeError,
    cdf_marginal,
    distribution_from_dict,
    distribution_moments,
    draw_noise,
    inverse_reg_inc_beta,
    log_pdf,
    mixture_cdf_marginal,
    mixture_moments,
    reg_inc_beta,
    reparam_grad_params,
    reparam_jacobian,
    reparam_sample,
    sample,
    score_function_grad,
    std_normal_cdf,
)
from Embedding_Distribution.special_functions import reg_inc_beta_param_derivatives
from Embedding_Distribution.utils.parameter_transforms import (
    beta_from_raw,
    beta_to_raw,
    softplus,
    softplus_derivative,
    softplus_inverse,
)


class TestSpecialFunctions(unittest.TestCase):
    """Incomplete beta and normal CDF against scipy"""

    def test_reg_inc_beta_matches_scipy(self):
        xs = np.linspace(0.01, 0.99, 25)
        for a, b in [(0.5, 0.5), (1.0, 1.0), (2.0, 3.0), (7.5, 1.2), (30.0, 40.0)]:
            ours = reg_inc_beta(xs, a, b)
            np.testing.assert_allclose(ours, special.betainc(a, b, xs), rtol=1e-10, atol=1e-12)

    def test_reg_inc_beta_endpoints_and_scalar(self):
        self.assertEqual(reg_inc_beta(0.0, 2.0, 3.0), 0.0)
        self.assertEqual(reg_inc_beta(1.0, 2.0, 3.0), 1.0)
        self.assertIsInstance(reg_inc_beta(0.3, 2.0, 3.0), float)

    def test_reg_inc_beta_symmetry(self):
        x = np.array([0.1, 0.4, 0.8])
        np.testing.assert_allclose(
            reg_inc_beta(x, 2.5, 4.0), 1.0 - reg_inc_beta(1.0 - x, 4.0, 2.5), atol=1e-12
        )

    def test_inverse_reg_inc_beta(self):
        p = np.array([1e-4, 0.01, 0.25, 0.5, 0.75, 0.99, 1 - 1e-4])
        for a, b in [(0.7, 0.9), (2.0, 2.0), (5.0, 1.5)]:
            x = inverse_reg_inc_beta(p, a, b)
            np.testing.assert_allclose(special.betainc(a, b, x), p, rtol=1e-8, atol=1e-12)
            np.testing.assert_allclose(x, special.betaincinv(a, b, p), rtol=1e-7, atol=1e-10)

    def test_inverse_small_shapes(self):
        # I_x(0.1, 1) = x^0.1, so the root for p = 0.01 is 1e-20
        self.assertAlmostEqual(inverse_reg_inc_beta(0.01, 0.1, 1.0) / 1e-20, 1.0, places=8)

        p = np.linspace(0.01, 0.99, 99)
        for a in (0.1, 0.5):
            for b in (0.1, 0.5):
                x = inverse_reg_inc_beta(p, a, b)
                residual = np.abs(special.betainc(a, b, x) - p)
                lower = p <= 0.5
                self.assertLessEqual(residual[lower].max(), 1e-10, msg=f"a={a}, b={b}")
                # Upper-tail roots may sit closer to 1 than a double can; the
                # neighbouring doubles must then straddle p
                off = residual > 1e-10
                below = special.betainc(a, b, np.nextafter(x[off], 0.0)) - p[off]
                above = special.betainc(a, b, np.nextafter(x[off], 1.0)) - p[off]
                self.assertTrue(np.all(below * above <= 0.0), msg=f"a={a}, b={b}")

    def test_param_derivatives_at_tiny_shapes(self):
        d_da, d_db = reg_inc_beta_param_derivatives(np.array([0.3, 0.6]), 1e-6, 2e-6)
        self.assertTrue(np.all(np.isfinite(d_da)))
        self.assertTrue(np.all(np.isfinite(d_db)))

    def test_inverse_endpoints(self):
        self.assertEqual(inverse_reg_inc_beta(0.0, 2.0, 3.0), 0.0)
        self.assertEqual(inverse_reg_inc_beta(1.0, 2.0, 3.0), 1.0)

    def test_std_normal_cdf_reference_value(self):
        self.assertAlmostEqual(std_normal_cdf(0.25), 0.598706, places=6)
        self.assertAlmostEqual(std_normal_cdf(0.0), 0.5)


class TestDistributionModels(unittest.TestCase):
    """Construction, validation and structured-text form"""

    def test_invalid_parameters(self):
        with self.assertRaises(DomainError):
            DiagGaussian(mean=np.zeros(3), sigma=-0.1)
        with self.assertRaises(DomainError):
            BetaPerDim(alpha=[1.0, 0.0], beta=[1.0, 1.0])
        with self.assertRaises(DomainError):
            BetaPerDim(alpha=[1.0, 2.0], beta=[1.0])
        with self.assertRaises(DomainError):
            DiagGaussian(mean=[np.nan], sigma=1.0)

    def test_parameters_are_read_only(self):
        dist = DiagGaussian(mean=np.zeros(2), sigma=1.0)
        with self.assertRaises(ValueError):
            dist.mean[0] = 1.0

    def test_from_dict(self):
        dist = BetaPerDim(alpha=[2.0, 3.0], beta=[1.5, 4.0])
        restored = distribution_from_dict(dist.to_dict())
        self.assertTrue(dist.same_parameters(restored))

        with self.assertRaises(ConfigError):
            distribution_from_dict({"kind": "laplace", "mean": [0.0]})
        with self.assertRaises(ConfigError):
            distribution_from_dict({"kind": "gaussian", "d": 3, "mean": [0.0, 1.0], "sigma": 1.0})

    def test_noise_domain(self):
        with self.assertRaises(DomainError):
            NoiseDraw(values=np.array([0.2, 1.0]), kind="beta")
        NoiseDraw(values=np.array([-3.0, 3.0]), kind="gaussian")

    def test_mixture_weights_must_sum_to_one(self):
        g = DiagGaussian(mean=np.zeros(2), sigma=1.0)
        with self.assertRaises(DomainError):
            MixtureRepresentation([MixtureComponent(0.5, g), MixtureComponent(0.4, g)])
        with self.assertRaises(DomainError):
            MixtureRepresentation([])

    def test_uniform_mixture(self):
        dists = [DiagGaussian(mean=np.full(2, float(i)), sigma=1.0) for i in range(3)]
        mix = MixtureRepresentation.uniform(dists)
        self.assertEqual(len(mix), 3)
        self.assertAlmostEqual(mix.weights.sum(), 1.0, places=12)
        self.assertTrue(mix.same_representation(MixtureRepresentation.uniform(dists)))


class TestDensities(unittest.TestCase):
    """Sampling, log density and marginal CDFs"""

    def setUp(self):
        self.rng = np.random.default_rng(0)

    def test_gaussian_log_pdf(self):
        dist = DiagGaussian(mean=[0.5, -1.0, 2.0], sigma=0.3)
        u = self.rng.normal(size=(5, 3))
        expected = stats.norm.logpdf(u, loc=dist.mean, scale=0.3).sum(axis=1)
        np.testing.assert_allclose(log_pdf(dist, u), expected, rtol=1e-12)
        self.assertIsInstance(log_pdf(dist, u[0]), float)

    def test_beta_log_pdf(self):
        dist = BetaPerDim(alpha=[2.0, 0.8], beta=[3.0, 1.7])
        u = self.rng.uniform(0.05, 0.95, size=(4, 2))
        expected = stats.beta.logpdf(u, dist.alpha, dist.beta).sum(axis=1)
        np.testing.assert_allclose(log_pdf(dist, u), expected, rtol=1e-10)

    def test_beta_log_pdf_outside_support(self):
        dist = BetaPerDim(alpha=[2.0, 2.0], beta=[2.0, 2.0])
        with self.assertRaises(DomainError):
            log_pdf(dist, np.array([0.5, 1.0]))

    def test_dimension_mismatch(self):
        dist = DiagGaussian(mean=np.zeros(3), sigma=1.0)
        with self.assertRaises(ShapeError):
            log_pdf(dist, np.zeros(2))
        with self.assertRaises(ShapeError):
            cdf_marginal(dist, 3, 0.0)

    def test_point_mass(self):
        dist = DiagGaussian(mean=[1.0, 2.0], sigma=0.0)
        draws = sample(dist, self.rng, size=4)
        self.assertTrue(np.all(draws == dist.mean))
        self.assertEqual(log_pdf(dist, dist.mean), 0.0)
        self.assertEqual(log_pdf(dist, np.array([1.0, 2.5])), -np.inf)
        self.assertEqual(cdf_marginal(dist, 0, 1.0), 1.0)
        self.assertEqual(cdf_marginal(dist, 0, 0.99), 0.0)

    def test_beta_samples_in_support(self):
        dist = BetaPerDim(alpha=[2.0, 0.5], beta=[3.0, 0.5])
        draws = sample(dist, self.rng, size=20000)
        self.assertTrue(np.all((draws > 0) & (draws < 1)))
        np.testing.assert_allclose(draws.mean(axis=0), [0.4, 0.5], atol=0.01)

    def test_cdf_marginal(self):
        gauss = DiagGaussian(mean=[0.0, 1.0], sigma=2.0)
        self.assertAlmostEqual(cdf_marginal(gauss, 1, 1.5), stats.norm.cdf(1.5, 1.0, 2.0), places=12)
        beta = BetaPerDim(alpha=[2.0], beta=[5.0])
        self.assertAlmostEqual(cdf_marginal(beta, 0, 0.3), stats.beta.cdf(0.3, 2.0, 5.0), places=10)

    def test_moments(self):
        mean, var = distribution_moments(BetaPerDim(alpha=[2.0], beta=[3.0]))
        self.assertAlmostEqual(mean[0], 0.4)
        self.assertAlmostEqual(var[0], 6.0 / (25.0 * 6.0))

        mix = MixtureRepresentation.uniform(
            [DiagGaussian(mean=[0.0], sigma=1.0), DiagGaussian(mean=[2.0], sigma=1.0)]
        )
        mean, var = mixture_moments(mix)
        self.assertAlmostEqual(mean[0], 1.0)
        self.assertAlmostEqual(var[0], 2.0)

    def test_mixture_cdf(self):
        mix = MixtureRepresentation.uniform(
            [DiagGaussian(mean=[0.0], sigma=1.0), DiagGaussian(mean=[2.0], sigma=1.0)]
        )
        self.assertAlmostEqual(float(mixture_cdf_marginal(mix, 0, np.array(1.0))), 0.5, places=12)


class TestReparameterization(unittest.TestCase):
    """u = g(xi) and its parameter gradients"""

    def setUp(self):
        self.rng = np.random.default_rng(1)

    def test_gaussian_location_scale(self):
        dist = DiagGaussian(mean=[1.0, -2.0], sigma=0.5)
        noise = draw_noise(dist, self.rng)
        np.testing.assert_allclose(reparam_sample(dist, noise), dist.mean + 0.5 * noise.values)

        upstream = np.array([0.3, -0.7])
        grad = reparam_grad_params(dist, noise, upstream)
        np.testing.assert_array_equal(grad.mean, upstream)

    def test_beta_inverse_cdf(self):
        dist = BetaPerDim(alpha=[2.0, 0.9], beta=[3.0, 1.4])
        noise = draw_noise(dist, self.rng, size=6)
        u = reparam_sample(dist, noise)
        np.testing.assert_allclose(special.betainc(dist.alpha, dist.beta, u), noise.values, atol=1e-10)

    def test_beta_implicit_derivative_matches_finite_difference(self):
        dist = BetaPerDim(alpha=[2.0, 3.5], beta=[3.0, 1.5])
        noise = NoiseDraw(values=np.array([0.3, 0.7]), kind="beta")
        _, du_dalpha, du_dbeta, valid = reparam_jacobian(dist, noise)
        self.assertTrue(valid.all())

        h = 1e-5
        fd_alpha = (
            special.betaincinv(dist.alpha + h, dist.beta, noise.values)
            - special.betaincinv(dist.alpha - h, dist.beta, noise.values)
        ) / (2 * h)
        fd_beta = (
            special.betaincinv(dist.alpha, dist.beta + h, noise.values)
            - special.betaincinv(dist.alpha, dist.beta - h, noise.values)
        ) / (2 * h)
        np.testing.assert_allclose(du_dalpha, fd_alpha, rtol=1e-4, atol=1e-8)
        np.testing.assert_allclose(du_dbeta, fd_beta, rtol=1e-4, atol=1e-8)

        # Raising alpha moves the mass right
        self.assertTrue(np.all(du_dalpha > 0))
        self.assertTrue(np.all(du_dbeta < 0))

    def test_score_function_agrees_with_pathwise(self):
        # f(u) = sum(u): the pathwise gradient in the mean is exactly 1
        dist = DiagGaussian(mean=np.zeros(2), sigma=1.0)
        u = sample(dist, self.rng, size=200000)
        grad = score_function_grad(dist, u, u.sum(axis=1))
        np.testing.assert_allclose(grad.mean, [1.0, 1.0], atol=0.03)

        with self.assertRaises(DomainError):
            score_function_grad(DiagGaussian(mean=np.zeros(2), sigma=0.0), u[:3], u[:3, 0])


class TestSamplingConsistency(unittest.TestCase):
    """Kolmogorov-Smirnov checks at 10^5 draws"""

    n_draws = 100000

    def setUp(self):
        self.rng = np.random.default_rng(7)

    def test_gaussian_sample_matches_cdf(self):
        dist = DiagGaussian(mean=[0.3, -1.0], sigma=0.7)
        draws = sample(dist, self.rng, size=self.n_draws)
        for dim in range(dist.d):
            result = stats.kstest(draws[:, dim], lambda v: cdf_marginal(dist, dim, v))
            self.assertLessEqual(result.statistic, 0.01)

    def test_beta_sample_matches_cdf(self):
        dist = BetaPerDim(alpha=[2.0, 0.5, 0.1], beta=[3.0, 0.5, 1.0])
        draws = sample(dist, self.rng, size=self.n_draws)
        for dim in range(dist.d):
            result = stats.kstest(draws[:, dim], lambda v: cdf_marginal(dist, dim, v))
            self.assertLessEqual(result.statistic, 0.01, msg=f"dim {dim}")

    def test_gaussian_reparam_matches_sample(self):
        dist = DiagGaussian(mean=[0.3, -1.0], sigma=0.7)
        direct = sample(dist, self.rng, size=self.n_draws)
        reparam = reparam_sample(dist, draw_noise(dist, self.rng, size=self.n_draws))
        for dim in range(dist.d):
            self.assertLessEqual(stats.ks_2samp(direct[:, dim], reparam[:, dim]).statistic, 0.01)

    def test_beta_reparam_matches_sample(self):
        dist = BetaPerDim(alpha=[2.0, 0.5, 0.1], beta=[3.0, 0.5, 1.0])
        direct = sample(dist, self.rng, size=self.n_draws)
        reparam = reparam_sample(dist, draw_noise(dist, self.rng, size=self.n_draws))
        for dim in range(dist.d):
            self.assertLessEqual(
                stats.ks_2samp(direct[:, dim], reparam[:, dim]).statistic, 0.01, msg=f"dim {dim}"
            )
            result = stats.kstest(reparam[:, dim], stats.beta(dist.alpha[dim], dist.beta[dim]).cdf)
            self.assertLessEqual(result.statistic, 0.01, msg=f"dim {dim}")


class TestParameterTransforms(unittest.TestCase):
    """Softplus storage for Beta shapes"""

    def test_softplus_inverse(self):
        values = np.array([1e-3, 0.5, 2.0, 40.0])
        np.testing.assert_allclose(softplus(softplus_inverse(values)), values, rtol=1e-10)

    def test_softplus_derivative(self):
        raw = np.array([-2.0, 0.0, 3.0])
        h = 1e-6
        fd = (softplus(raw + h) - softplus(raw - h)) / (2 * h)
        np.testing.assert_allclose(softplus_derivative(raw), fd, rtol=1e-6)

    def test_beta_raw_round_trip(self):
        dist = BetaPerDim(alpha=[2.0, 0.5], beta=[1.5, 7.0])
        restored = beta_from_raw(beta_to_raw(dist))
        np.testing.assert_allclose(restored.alpha, dist.alpha, rtol=1e-12)
        np.testing.assert_allclose(restored.beta, dist.beta, rtol=1e-12)


if __name__ == "__main__":
    unittest.main()
