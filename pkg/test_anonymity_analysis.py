#!/usr/bin/env python3
"""
Tests for the attribution attack, the misattribution bound, Beta mixture
non-identifiability and the user-entropy analysis.
"""

import os
import sys
import unittest

import numpy as np
from pydantic import ValidationError
from scipy import stats

# Add parent directory to the Python path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from Anonymity_Analysis import (
    AttackReport,
    EntropyBucketReport,
    attack_labels,
    beta_decompose,
    beta_witness,
    chained_decompositions,
    check_closeness,
    closer_to_own_mean_frequency,
    closer_to_own_mean_probability,
    dataset_size_prior,
    decomposition_coefficients,
    default_bucket_edges,
    misattribution_lower_bound,
    misattribution_mc,
    nearest_mean,
    pairwise_gap_check,
    posterior_argmax,
    prediction_entropy,
    uniform_prior,
    user_entropy_analysis,
    verify_nonidentifiability,
)
from Embedding_Distribution import (
    BetaPerDim,
    ConfigError,
    DiagGaussian,
    DomainError,
    MixtureRepresentation,
    ShapeError,
)
from Personalized_Model import FrozenModel, SyntheticTaskSpec, generate_synthetic


class TestAttribution(unittest.TestCase):
    """Posterior-argmax and nearest-mean attackers"""

    def test_identical_distributions_tie_to_lowest_index(self):
        dists = [DiagGaussian(mean=np.zeros(3), sigma=0.5)] * 2
        report = misattribution_mc(dists, M=500, rng=np.random.default_rng(0))
        self.assertEqual(report.empirical_misattribution, 0.5)
        self.assertEqual(report.per_user_rates, [0.0, 1.0])
        self.assertEqual(report.total, 1000)

    def test_point_masses_are_never_confused(self):
        dists = [DiagGaussian(mean=np.full(2, float(k)), sigma=0.0) for k in range(4)]
        report = misattribution_mc(dists, M=50, rng=np.random.default_rng(0), eta=1e-3, T=10, G=1.0)
        self.assertEqual(report.empirical_misattribution, 0.0)
        # No bound for zero variance
        self.assertIsNone(report.theoretical_bound)

    def test_point_mass_miss_falls_back_to_nearest_mean(self):
        dists = [DiagGaussian(mean=[0.0, 0.0], sigma=0.0), DiagGaussian(mean=[5.0, 5.0], sigma=0.0)]
        self.assertEqual(posterior_argmax(dists, uniform_prior(2), np.array([4.0, 4.5])), 1)

    def test_posterior_prefers_likely_source(self):
        dists = [DiagGaussian(mean=[0.0], sigma=1.0), DiagGaussian(mean=[3.0], sigma=1.0)]
        self.assertEqual(posterior_argmax(dists, uniform_prior(2), np.array([2.0])), 1)
        # A strong prior overrides a mild likelihood advantage
        self.assertEqual(posterior_argmax(dists, np.array([0.999, 0.001]), np.array([2.0])), 0)
        self.assertEqual(nearest_mean(dists, np.array([1.4])), 0)

    def test_beta_support(self):
        dists = [BetaPerDim(alpha=[2.0], beta=[5.0]), BetaPerDim(alpha=[5.0], beta=[2.0])]
        self.assertEqual(posterior_argmax(dists, uniform_prior(2), np.array([0.9])), 1)
        with self.assertRaises(DomainError):
            posterior_argmax(dists, uniform_prior(2), np.array([1.2]))

    def test_prior_validation(self):
        dists = [DiagGaussian(mean=[0.0], sigma=1.0)] * 3
        with self.assertRaises(DomainError):
            misattribution_mc(dists, prior=np.array([0.5, 0.5, 0.5]), M=5)
        with self.assertRaises(ShapeError):
            misattribution_mc(dists, prior=np.array([0.5, 0.5]), M=5)
        np.testing.assert_allclose(dataset_size_prior([10, 30]), [0.25, 0.75])
        with self.assertRaises(ConfigError):
            dataset_size_prior([0, 0])

    def test_unknown_attacker(self):
        with self.assertRaises(ConfigError):
            attack_labels([DiagGaussian(mean=[0.0], sigma=1.0)], np.zeros((1, 1)), attacker="oracle")

    def test_workers_do_not_change_result(self):
        rng = np.random.default_rng(2)
        dists = [DiagGaussian(mean=rng.normal(scale=0.1, size=4), sigma=0.2) for _ in range(6)]
        one = misattribution_mc(dists, M=200, rng=np.random.default_rng(9), workers=1)
        many = misattribution_mc(dists, M=200, rng=np.random.default_rng(9), workers=4)
        self.assertEqual(one.per_user_rates, many.per_user_rates)

    def test_nearest_mean_attacker(self):
        dists = [DiagGaussian(mean=[0.0, 0.0], sigma=0.1), DiagGaussian(mean=[10.0, 0.0], sigma=0.1)]
        report = misattribution_mc(dists, M=100, attacker="nearest_mean", rng=np.random.default_rng(1))
        self.assertEqual(report.empirical_misattribution, 0.0)
        self.assertEqual(report.attacker, "nearest_mean")


class TestBounds(unittest.TestCase):
    """Misattribution lower bound, closeness probability and the gap check"""

    def test_lower_bound_reference(self):
        bound = misattribution_lower_bound(eta=0.01, T=10, G=5.0, sigma=0.2, N=50)
        self.assertAlmostEqual(bound, 1.0 - stats.norm.cdf(2.5) ** 49, places=12)
        self.assertAlmostEqual(bound, 0.263, places=3)

    def test_lower_bound_edges(self):
        self.assertEqual(misattribution_lower_bound(0.1, 10, 1.0, 0.5, 1), 0.0)
        with self.assertRaises(DomainError):
            misattribution_lower_bound(0.1, 10, 1.0, 0.0, 5)
        with self.assertRaises(DomainError):
            misattribution_lower_bound(0.1, 10, 1.0, 0.5, 0)
        # No movement means the attacker is no better than chance
        self.assertAlmostEqual(misattribution_lower_bound(0.1, 0, 1.0, 0.5, 3), 0.75)

    def test_bound_holds_empirically(self):
        rng = np.random.default_rng(4)
        eta, T, G, sigma = 0.01, 10, 1.0, 0.04
        means = [eta * T * G * v / np.linalg.norm(v) * rng.uniform() for v in rng.normal(size=(8, 3))]
        dists = [DiagGaussian(mean=m, sigma=sigma) for m in means]
        report = misattribution_mc(dists, M=2000, rng=rng, eta=eta, T=T, G=G)
        self.assertIsNotNone(report.theoretical_bound)
        self.assertGreaterEqual(report.empirical_misattribution, report.theoretical_bound - 0.01)

    def test_closeness_reference(self):
        self.assertAlmostEqual(closer_to_own_mean_probability(0.1, 0.2), 0.598706, places=6)
        self.assertEqual(closer_to_own_mean_probability(np.inf, 0.2), 1.0)
        self.assertEqual(closer_to_own_mean_probability(0.0, 0.2), 0.5)
        with self.assertRaises(DomainError):
            closer_to_own_mean_probability(0.1, 0.0)

    def test_closeness_frequency_matches(self):
        for d in (1, 8):
            freq = closer_to_own_mean_frequency(0.1, 0.2, d, 200000, np.random.default_rng(d))
            self.assertAlmostEqual(freq, 0.598706, delta=0.006)
        check = check_closeness(0.3, 0.2, 4, 200000, np.random.default_rng(0))
        self.assertTrue(check.passed)

    def test_pairwise_gap(self):
        dists = [DiagGaussian(mean=[0.1, 0.0], sigma=0.2), DiagGaussian(mean=[-0.1, 0.0], sigma=0.2)]
        self.assertTrue(pairwise_gap_check(dists, eta=0.01, T=10, G=1.0).passed)
        report = pairwise_gap_check(dists, eta=0.001, T=10, G=1.0)
        self.assertFalse(report.passed)
        self.assertEqual(report.violations, 1)
        self.assertAlmostEqual(report.max_gap, 0.2)
        self.assertTrue(pairwise_gap_check(dists[:1], 0.1, 1, 1.0).passed)
        with self.assertRaises(ConfigError):
            pairwise_gap_check([BetaPerDim(alpha=[1.0], beta=[1.0])] * 2, 0.1, 1, 1.0)


class TestNonIdentifiability(unittest.TestCase):
    """Beta decomposition keeps the density and changes the representation"""

    def setUp(self):
        self.mix = MixtureRepresentation.uniform([
            BetaPerDim(alpha=[2.0, 3.0], beta=[3.0, 1.5]),
            BetaPerDim(alpha=[4.0, 1.2], beta=[2.0, 2.5]),
        ])

    def test_coefficients(self):
        c1, c2 = decomposition_coefficients(2.0, 3.0)
        self.assertAlmostEqual(c1, 0.4)
        self.assertAlmostEqual(c2, 0.6)

    def test_single_decomposition(self):
        split = beta_decompose(self.mix, 0, 1)
        self.assertEqual(len(split), 3)
        np.testing.assert_allclose(split.components[0].dist.alpha, [2.0, 4.0])
        np.testing.assert_allclose(split.components[1].dist.beta, [3.0, 2.5])
        self.assertAlmostEqual(split.components[0].weight, 0.5 * 3.0 / 4.5)
        report = verify_nonidentifiability(self.mix, split, resolution=120)
        self.assertTrue(report.passed)
        self.assertTrue(report.representations_differ)
        self.assertLessEqual(report.max_diff, 1e-9)

    def test_chained_decompositions(self):
        chain = chained_decompositions(self.mix, 3, np.random.default_rng(0))
        self.assertEqual([len(m) for m in chain], [3, 4, 5])
        self.assertTrue(verify_nonidentifiability(self.mix, chain[-1], resolution=80).passed)

    def test_identical_representation_is_not_a_witness(self):
        report = verify_nonidentifiability(self.mix, self.mix, resolution=50)
        self.assertFalse(report.passed)
        self.assertEqual(report.max_pdf_diff, 0.0)

    def test_different_densities_fail(self):
        other = MixtureRepresentation.uniform([BetaPerDim(alpha=[2.0, 2.0], beta=[2.0, 2.0])] * 2)
        self.assertFalse(verify_nonidentifiability(self.mix, other, resolution=50).passed)

    def test_errors(self):
        gauss = MixtureRepresentation.uniform([DiagGaussian(mean=[0.0, 0.0], sigma=1.0)])
        with self.assertRaises(ConfigError):
            beta_decompose(gauss, 0, 0)
        with self.assertRaises(ShapeError):
            beta_decompose(self.mix, 2, 0)
        with self.assertRaises(ShapeError):
            beta_decompose(self.mix, 0, 2)
        with self.assertRaises(ConfigError):
            beta_witness([DiagGaussian(mean=[0.0], sigma=1.0)])

    def test_witness(self):
        dists = [BetaPerDim(alpha=np.full(5, 2.0 + k), beta=np.full(5, 3.0)) for k in range(4)]
        witness = beta_witness(dists, max_components=3, dims=2)
        self.assertEqual(len(witness), 3)
        self.assertEqual(witness.d, 2)


class TestUserEntropy(unittest.TestCase):
    """Entropy buckets"""

    def setUp(self):
        self.task = generate_synthetic(SyntheticTaskSpec(N=5, per_user=20, d_x=4, C=3, seed=3))
        self.dists = [DiagGaussian(mean=np.zeros(2), sigma=1.0)] * 5

    def test_prediction_entropy(self):
        self.assertEqual(prediction_entropy(np.array([1, 1, 1]), 3), 0.0)
        self.assertAlmostEqual(prediction_entropy(np.array([0, 1, 2, 3]), 4), np.log(4.0))

    def test_default_edges(self):
        edges = default_bucket_edges(20, 4)
        self.assertEqual(len(edges), 7)
        self.assertAlmostEqual(edges[-1], np.log(4.0))
        self.assertAlmostEqual(default_bucket_edges(2, 4)[-1], np.log(2.0))

    def test_constant_model_lands_in_lowest_bucket(self):
        model = FrozenModel.zeros(2, 4, 6, 3)
        report = user_entropy_analysis(model, self.dists, self.task.devices, K=3,
                                       rng=np.random.default_rng(0), baseline_model=model)
        self.assertEqual(report.total_count, 5 * 4)
        self.assertEqual(report.per_bucket_count[0], 20)
        self.assertEqual(report.occupied_lifts(), [0.0])

    def test_random_model_fills_buckets(self):
        model = FrozenModel.init_random(2, 4, 6, 3, np.random.default_rng(1), init_scale=3.0)
        report = user_entropy_analysis(model, self.dists, self.task.devices, K=5,
                                       bucket_edges=[0.0, 0.5, 2.0], rng=np.random.default_rng(0))
        self.assertEqual(report.total_count, 20)
        self.assertEqual(len(report.per_bucket_accuracy), 2)
        self.assertIsNone(report.lifts())

    def test_k_validation(self):
        model = FrozenModel.zeros(2, 4, 6, 3)
        with self.assertRaises(ConfigError):
            user_entropy_analysis(model, self.dists, self.task.devices, K=1)
        with self.assertRaises(ConfigError):
            user_entropy_analysis(model, self.dists, self.task.devices, K=6)
        with self.assertRaises(ConfigError):
            user_entropy_analysis(model, self.dists[:4], self.task.devices, K=2)


class TestReportModels(unittest.TestCase):
    """Report validation"""

    def test_attack_report_counts(self):
        with self.assertRaises(ValidationError):
            AttackReport(empirical_misattribution=0.1, samples_per_user=1, per_user_rates=[0.1],
                         misattributed=5, total=1)
        report = AttackReport(empirical_misattribution=0.3, theoretical_bound=0.25, samples_per_user=10,
                              per_user_rates=[0.3], misattributed=3, total=10)
        self.assertAlmostEqual(report.bound_slack, 0.05)

    def test_bucket_report_edges(self):
        with self.assertRaises(ValidationError):
            EntropyBucketReport(bucket_edges=[0.0, 0.0, 1.0], per_bucket_accuracy=[0.0, 0.0],
                                per_bucket_count=[0, 0], K=2)
        with self.assertRaises(ValidationError):
            EntropyBucketReport(bucket_edges=[0.0, 1.0], per_bucket_accuracy=[0.0, 0.0],
                                per_bucket_count=[0], K=2)


if __name__ == "__main__":
    unittest.main()
