#!/usr/bin/env python3
"""
Tests for the frozen embedding classifier and the synthetic personalized task.
"""

import math
import os
import sys
import tempfile
import unittest
from unittest.mock import patch

import numpy as np
from pydantic import ValidationError

# Add parent directory to the Python path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from Embedding_Distribution.errors import ConfigError, ShapeError
from Personalized_Model import (
    CloudModel,
    FrozenModel,
    SyntheticTaskSpec,
    clean_scores,
    forward,
    generate_synthetic,
    grad_embedding,
    grad_model,
    loss,
    mean_loss,
    oracle_accuracy,
    pooled_samples,
    predict,
)


def _numeric_gradient(f, x, h=1e-6):
    grad = np.zeros_like(x)
    for i in range(x.size):
        step = np.zeros_like(x)
        step.flat[i] = h
        grad.flat[i] = (f(x + step) - f(x - step)) / (2 * h)
    return grad


class TestClassifier(unittest.TestCase):
    """Forward pass, loss and analytic gradients"""

    def setUp(self):
        self.rng = np.random.default_rng(0)
        self.model = FrozenModel.init_random(3, 4, 5, 3, self.rng)

    def test_zero_model_is_uniform(self):
        model = FrozenModel.zeros(2, 3, 4, 4)
        probs = forward(model, np.ones(2), np.ones(3))
        np.testing.assert_allclose(probs, np.full(4, 0.25))
        self.assertAlmostEqual(loss(probs, 2), np.log(4.0))
        self.assertAlmostEqual(mean_loss(model, np.zeros((5, 2)), np.ones((5, 3)), 1), np.log(4.0))
        # Ties break to the lowest class index
        self.assertTrue(np.all(predict(model, np.zeros(2), np.zeros((3, 3))) == 0))

    def test_probabilities_sum_to_one(self):
        probs = forward(self.model, self.rng.normal(size=(6, 3)), self.rng.normal(size=(6, 4)))
        self.assertEqual(probs.shape, (6, 3))
        np.testing.assert_allclose(probs.sum(axis=1), 1.0)

    def test_single_embedding_broadcasts(self):
        u = self.rng.normal(size=3)
        X = self.rng.normal(size=(4, 4))
        batched = forward(self.model, np.tile(u, (4, 1)), X)
        np.testing.assert_allclose(forward(self.model, u, X), batched)

    def test_golden_vector(self):
        model = FrozenModel(
            d_u=1, d_x=1, d_h=2, n_classes=2,
            W1=np.eye(2), b1=np.zeros(2),
            W2=np.array([[1.0, 0.0], [0.0, 2.0]]), b2=np.array([0.0, 0.5]),
        )
        u, x = np.array([0.5]), np.array([-1.0])
        probs = forward(model, u, x)
        self.assertAlmostEqual(probs[0], 0.815, places=3)
        self.assertAlmostEqual(loss(probs, 1), 1.689, places=3)
        self.assertAlmostEqual(grad_embedding(model, u, x, 1)[0], 0.641, places=3)

        # Same network written out by hand with scalars
        h0, h1 = math.tanh(0.5), math.tanh(-1.0)
        logit0, logit1 = h0, 2.0 * h1 + 0.5
        p0 = 1.0 / (1.0 + math.exp(logit1 - logit0))
        self.assertAlmostEqual(probs[0], p0, places=12)
        self.assertAlmostEqual(loss(probs, 1), -math.log(1.0 - p0), places=12)
        self.assertAlmostEqual(grad_embedding(model, u, x, 1)[0], p0 * (1.0 - h0 ** 2), places=12)

    def test_loss_floor(self):
        self.assertAlmostEqual(loss(np.array([1.0, 0.0]), 1), -np.log(1e-12))

    def test_grad_embedding_matches_finite_difference(self):
        u = self.rng.normal(size=3)
        x = self.rng.normal(size=4)
        y = 2
        analytic = grad_embedding(self.model, u, x, y)
        numeric = _numeric_gradient(lambda v: loss(forward(self.model, v, x), y), u)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-8)

    def test_grad_embedding_batch_rows(self):
        U = self.rng.normal(size=(3, 3))
        X = self.rng.normal(size=(3, 4))
        y = np.array([0, 1, 2])
        rows = grad_embedding(self.model, U, X, y)
        for i in range(3):
            np.testing.assert_allclose(rows[i], grad_embedding(self.model, U[i], X[i], y[i]))

    def test_grad_model_matches_finite_difference(self):
        cloud = self.model.thaw()
        U = self.rng.normal(size=(4, 3))
        X = self.rng.normal(size=(4, 4))
        y = np.array([0, 2, 1, 2])
        analytic = grad_model(cloud, U, X, y)

        for name in ("W1", "b1", "W2", "b2"):
            original = getattr(cloud, name).copy()

            def objective(values, name=name):
                setattr(cloud, name, values)
                return mean_loss(cloud, U, X, y)

            numeric = _numeric_gradient(objective, original)
            setattr(cloud, name, original)
            np.testing.assert_allclose(getattr(analytic, name), numeric, rtol=1e-5, atol=1e-8)

    def test_shape_errors(self):
        with self.assertRaises(ShapeError):
            forward(self.model, np.zeros(2), np.zeros(4))
        with self.assertRaises(ShapeError):
            forward(self.model, np.zeros((2, 3)), np.zeros((3, 4)))
        with self.assertRaises(ShapeError):
            grad_embedding(self.model, np.zeros(3), np.zeros(4), 5)


class TestModelEntities(unittest.TestCase):
    """Freezing, checksums and checkpoints"""

    def setUp(self):
        self.model = FrozenModel.init_random(2, 3, 4, 3, np.random.default_rng(1))

    def test_frozen_weights_are_read_only(self):
        with self.assertRaises(ValueError):
            self.model.W1[0, 0] = 1.0

    def test_thaw_copies(self):
        cloud = self.model.thaw()
        self.assertIsInstance(cloud, CloudModel)
        self.assertEqual(cloud.checksum(), self.model.checksum())

        before = self.model.checksum()
        cloud.W2[0, 0] += 1.0
        self.assertNotEqual(cloud.checksum(), before)
        self.assertEqual(self.model.checksum(), before)

        frozen = cloud.freeze()
        self.assertFalse(frozen.trainable)
        self.assertEqual(frozen.checksum(), cloud.checksum())

    def test_embedding_rows_scaled_alone(self):
        plain = FrozenModel.init_random(2, 3, 4, 3, np.random.default_rng(5))
        scaled = FrozenModel.init_random(2, 3, 4, 3, np.random.default_rng(5), embedding_scale=8.0)
        np.testing.assert_allclose(scaled.W1[:2], 8.0 * plain.W1[:2])
        np.testing.assert_array_equal(scaled.W1[2:], plain.W1[2:])
        np.testing.assert_array_equal(scaled.W2, plain.W2)

    def test_cloud_model_must_be_trainable(self):
        with self.assertRaises(ConfigError):
            CloudModel.zeros(2, 3, 4, 3, trainable=False)

    def test_bad_weight_shape(self):
        with self.assertRaises(ShapeError):
            FrozenModel(d_u=2, d_x=3, d_h=4, n_classes=3,
                        W1=np.zeros((4, 4)), b1=np.zeros(4), W2=np.zeros((4, 3)), b2=np.zeros(3))

    def test_checkpoint(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "model.json")
            self.model.save_checkpoint(path)
            restored = FrozenModel.load_checkpoint(path)
        self.assertEqual(restored.checksum(), self.model.checksum())
        self.assertFalse(restored.trainable)


class TestSyntheticTask(unittest.TestCase):
    """Generator shape, determinism and oracle accuracies"""

    def setUp(self):
        self.spec = SyntheticTaskSpec(N=10, per_user=50, d_x=6, C=3, seed=4)
        self.task = generate_synthetic(self.spec)

    def test_shapes(self):
        self.assertEqual(len(self.task.devices), 10)
        for i, device in enumerate(self.task.devices):
            self.assertEqual(device.local_user_id, i)
            self.assertEqual(len(device.train), 40)
            self.assertEqual(len(device.test), 10)
            self.assertAlmostEqual(np.linalg.norm(device.true_bias), 1.0)
            X, y = device.train_arrays()
            self.assertEqual(X.shape, (40, 6))
            self.assertTrue(np.all((y >= 0) & (y < 3)))
        self.assertEqual(len(pooled_samples(self.task)), 400)
        self.assertEqual(len(pooled_samples(self.task, split="test")), 100)

    def test_deterministic(self):
        again = generate_synthetic(self.spec)
        for a, b in zip(self.task.devices, again.devices):
            np.testing.assert_array_equal(a.train_arrays()[0], b.train_arrays()[0])
            np.testing.assert_array_equal(a.train_arrays()[1], b.train_arrays()[1])
            np.testing.assert_array_equal(a.true_bias, b.true_bias)

    def test_oracle_uses_bias(self):
        task = generate_synthetic(SyntheticTaskSpec(N=40, per_user=100, seed=2))
        with_bias = oracle_accuracy(task, use_bias=True)
        self.assertGreater(with_bias, 0.9)
        self.assertGreater(with_bias, oracle_accuracy(task, use_bias=False))

    def test_noise_free_labels_follow_oracle_rule(self):
        spec = SyntheticTaskSpec(N=6, per_user=40, d_x=6, C=3, label_noise=0.0, seed=9)
        with patch("Personalized_Model.synthetic_data.clean_scores", wraps=clean_scores) as scores:
            task = generate_synthetic(spec)
        self.assertEqual(scores.call_count, 6)
        self.assertEqual(oracle_accuracy(task, use_bias=True, split="train"), 1.0)
        self.assertEqual(oracle_accuracy(task, use_bias=True, split="test"), 1.0)

    def test_zero_kappa_bias_is_irrelevant(self):
        task = generate_synthetic(SyntheticTaskSpec(N=5, per_user=40, kappa=0.0))
        self.assertEqual(oracle_accuracy(task, True), oracle_accuracy(task, False))

    def test_spec_validation(self):
        with self.assertRaises(ValidationError):
            SyntheticTaskSpec(N=1)
        with self.assertRaises(ValidationError):
            SyntheticTaskSpec(unknown=1)
        with self.assertRaises(ValidationError):
            SyntheticTaskSpec(per_user=4, train_fraction=0.1)

    def test_dump(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "device.jsonl")
            self.task.devices[0].dump(path)
            with open(path) as f:
                lines = f.read().splitlines()
        self.assertEqual(len(lines), 40)
        self.assertNotIn("user", lines[0])


if __name__ == "__main__":
    unittest.main()
