#!/usr/bin/env python3
"""
Comprehensive test suite for the anonymous embedding lab.

End-to-end runs at a scale where personalization has signal: determinism,
transport independence, the sigma trade-off, baselines and mutation checks
that the invariant guards actually fire.
"""

import json
import os
import sys
import tempfile
import time
import unittest
from unittest.mock import patch

import numpy as np

# Add parent directory to the Python path
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from Cloud_Service import evaluate_fixed_embedding
from Embedding_Distribution import StageError
from Experiment_Harness import (
    ExperimentConfig,
    baseline_no_id,
    baseline_on_device,
    baseline_static_embedding,
    run_protocol,
    sweep_variance,
)
from Experiment_Harness.protocol import prepare_bootstrap
from Experiment_Harness.reports import read_csv


def scenario_config(**overrides) -> ExperimentConfig:
    sections = {
        "task": {"N": 8, "per_user": 60, "d_x": 6, "C": 3, "bias_dim": 4},
        "model": {"d_u": 4, "d_h": 16},
        "trainer": {"eta": 0.05, "t_max": 60, "sigma": 0.1, "batch_size": 24},
        "cloud": {"bootstrap_epochs": 10, "finetune_epochs": 10},
        "attack": {"M": 200},
        "entropy": {"K": 4},
    }
    for name, values in overrides.items():
        if isinstance(values, dict):
            sections.setdefault(name, {}).update(values)
        else:
            sections[name] = values
    return ExperimentConfig().with_updates(**sections)


class TestEndToEnd(unittest.TestCase):
    """Full protocol runs"""

    @classmethod
    def setUpClass(cls):
        cls.cfg = scenario_config()
        start = time.time()
        cls.result = run_protocol(cls.cfg)
        print(f"Scenario run completed in {time.time() - start:.3f}s")

    def test_metrics_record(self):
        metrics = self.result.metrics
        for key in ("accuracy_personalized", "accuracy_bootstrap", "misattribution"):
            self.assertGreaterEqual(metrics[key], 0.0)
            self.assertLessEqual(metrics[key], 1.0)
        self.assertEqual(metrics["n_users"], 8)
        self.assertEqual(metrics["iterations_used"], 60)
        self.assertLess(metrics["mean_final_train_loss"], metrics["mean_initial_train_loss"])
        self.assertTrue(metrics["pairwise_gap"]["passed"])
        self.assertTrue(metrics["wire"]["audit"]["passed"])

    def test_collected_records_are_anonymous(self):
        for payload in self.result.wire_sessions:
            for line in payload.decode("utf-8").splitlines():
                self.assertEqual(set(json.loads(line)), {"e", "x", "y"})
        self.assertEqual(len(self.result.dataset), 8 * 48)

    def test_deterministic(self):
        again = run_protocol(self.cfg)
        self.assertEqual(again.metrics, self.result.metrics)
        for a, b in zip(again.dists, self.result.dists):
            self.assertTrue(a.same_parameters(b))

    def test_socket_transport_matches(self):
        socket_run = run_protocol(self.cfg.with_updates(transport="socket"))
        self.assertEqual(socket_run.dataset.records, self.result.dataset.records)
        self.assertEqual(socket_run.evaluation.accuracy, self.result.evaluation.accuracy)
        self.assertEqual(socket_run.attack.empirical_misattribution, self.result.attack.empirical_misattribution)

    def test_frozen_bootstrap_untouched_by_devices(self):
        self.assertFalse(self.result.bootstrap_model.trainable)
        self.assertNotEqual(self.result.final_model.checksum(), self.result.bootstrap_model.checksum())


class TestDefaultScale(unittest.TestCase):
    """Acceptance at the default configuration, judged on the median of five seeds"""

    SEEDS = range(5)

    @classmethod
    def setUpClass(cls):
        start = time.time()
        cls.runs = [run_protocol(ExperimentConfig().reseeded(seed)) for seed in cls.SEEDS]
        print(f"Default-scale runs completed in {time.time() - start:.3f}s")

    def test_personalization_lifts_accuracy_over_no_id(self):
        lifts = [run.metrics["lift_vs_no_id"] for run in self.runs]
        self.assertGreaterEqual(float(np.median(lifts)), 0.05, lifts)

    def test_high_entropy_users_gain_more(self):
        trends = []
        for run in self.runs:
            lifts = run.entropy.occupied_lifts()
            self.assertGreaterEqual(len(lifts), 2)
            trends.append(lifts[-1] - lifts[0])
        self.assertGreater(float(np.median(trends)), 0.0, trends)

    def test_misattribution_respects_bound(self):
        for run in self.runs:
            self.assertTrue(run.metrics["bound_sound"])
            self.assertGreaterEqual(run.attack.empirical_misattribution,
                                    run.attack.theoretical_bound - run.config.attack.bound_slack)

    def test_sigma_sweep_trade_off(self):
        cfg = ExperimentConfig().with_updates(attack={"M": 5000}, entropy={"enabled": False})
        with tempfile.TemporaryDirectory() as tmp:
            rows = sweep_variance(cfg, [0.0, 0.1, 0.2, 0.3], out_dir=tmp)
            self.assertEqual(len(read_csv(os.path.join(tmp, "sweep.csv"))), 4)
        self.assertEqual([r.sigma for r in rows], [0.0, 0.1, 0.2, 0.3])
        self.assertEqual(rows[0].misattribution, 0.0)
        mis = [r.misattribution for r in rows]
        self.assertEqual(mis, sorted(mis))
        self.assertLessEqual(rows[-1].accuracy, rows[0].accuracy + 0.01)


class TestScenarios(unittest.TestCase):
    """Variants, baselines and output files"""

    def test_outputs_written(self):
        cfg = scenario_config(task={"N": 5, "per_user": 30}, entropy={"K": 3}, rounds=2)
        with tempfile.TemporaryDirectory() as tmp:
            result = run_protocol(cfg, out_dir=tmp, include_on_device=True)
            with open(os.path.join(tmp, "metrics.json")) as f:
                metrics = json.load(f)
            per_user = read_csv(os.path.join(tmp, "attack_per_user.csv"))
        self.assertEqual(metrics["rounds"], 2)
        self.assertIn("lift_vs_on_device", metrics)
        self.assertEqual(len(per_user), 5)
        self.assertEqual(metrics, json.loads(json.dumps(result.metrics)))

    def test_static_embedding_baseline(self):
        cfg = scenario_config(task={"N": 5, "per_user": 30}, entropy={"enabled": False})
        result = baseline_static_embedding(cfg)
        self.assertEqual(result.attack.empirical_misattribution, 0.0)
        self.assertIsNone(result.attack.theoretical_bound)
        self.assertEqual(result.metrics["accuracy_bootstrap"], baseline_no_id(cfg))

    def test_on_device_without_epochs_is_no_id(self):
        cfg = scenario_config(task={"N": 5, "per_user": 30}, cloud={"on_device_epochs": 0})
        task, bootstrap = prepare_bootstrap(cfg)
        no_id = evaluate_fixed_embedding(bootstrap, task.devices)
        on_device = baseline_on_device(cfg, task, bootstrap)
        self.assertEqual(on_device, list(no_id.per_user_accuracy))
        self.assertAlmostEqual(float(np.mean(on_device)), baseline_no_id(cfg))

    def test_beta_mode(self):
        cfg = scenario_config(
            task={"N": 5, "per_user": 30},
            trainer={"mode": "beta", "t_max": 20, "mc_samples": 4},
            entropy={"enabled": False},
        )
        result = run_protocol(cfg)
        self.assertTrue(result.metrics["nonidentifiability"]["passed"])
        self.assertIsNone(result.metrics["misattribution_bound"])
        for dist in result.dists:
            self.assertTrue(np.all(dist.alpha > 0))

    def test_cached_inference_policy(self):
        cfg = scenario_config(
            task={"N": 5, "per_user": 30},
            inference={"embedding_policy": "cached", "cache_size": 4},
            entropy={"enabled": False},
        )
        first = run_protocol(cfg)
        self.assertEqual(first.metrics, run_protocol(cfg).metrics)


class TestGuards(unittest.TestCase):
    """Breaking an invariant makes the run fail loudly"""

    def test_unclipped_training_breaks_the_gap_check(self):
        cfg = scenario_config(task={"N": 5, "per_user": 30}, trainer={"clip_norm": 0.001}, entropy={"enabled": False})
        self.assertTrue(run_protocol(cfg).gap.passed)

        with patch("Device_Trainer.trainer.clip", lambda grad, bound: grad):
            with self.assertRaises(StageError) as ctx:
                run_protocol(cfg)
        self.assertEqual(ctx.exception.stage, "train_devices")

    def test_zero_misattribution_can_be_required(self):
        cfg = scenario_config(
            task={"N": 5, "per_user": 30},
            trainer={"sigma": 0.0},
            attack={"assert_misattribution": True},
            entropy={"enabled": False},
        )
        with self.assertRaises(StageError) as ctx:
            run_protocol(cfg)
        self.assertEqual(ctx.exception.stage, "attack")


if __name__ == "__main__":
    unittest.main()
