"""
Synthetic personalized classification task standing in for review datasets.

Each user n has a bias b_n uniform on the unit sphere in R^bias_dim. Class
prototypes w_c (features) and v_c (bias) are drawn once from the seed. A
sample's clean score for class c is w_c . x + kappa * v_c . b_n; the label is
the argmax, flipped to a uniformly random other class with probability
label_noise.
"""

import logging
from typing import List

import numpy as np

from .models.model_entities import (
    DeviceDataset,
    LabeledSample,
    SyntheticTask,
    SyntheticTaskSpec,
)

logger = logging.getLogger(__name__)


def _unit_sphere(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    points = rng.standard_normal((n, dim))
    return points / np.linalg.norm(points, axis=1, keepdims=True)


def clean_scores(task: SyntheticTask, x: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Noise-free class scores for features x (n, d_x) under one user bias."""
    return x @ task.feature_prototypes.T + task.spec.kappa * (task.bias_prototypes @ bias)


def generate_synthetic(spec: SyntheticTaskSpec) -> SyntheticTask:
    """
    Build one DeviceDataset per user.

    Args:
        spec: Task parameters; the seed fixes everything

    Returns:
        The datasets plus the prototypes used to generate them
    """
    rng = np.random.default_rng(spec.seed)
    # ||w_c|| ~ 1 so w_c . x is O(1) for standard normal x
    feature_prototypes = rng.normal(0.0, 1.0 / np.sqrt(spec.d_x), size=(spec.C, spec.d_x))
    bias_prototypes = rng.standard_normal((spec.C, spec.bias_dim))
    biases = _unit_sphere(rng, spec.N, spec.bias_dim)

    task = SyntheticTask(
        spec=spec,
        devices=[],
        feature_prototypes=feature_prototypes,
        bias_prototypes=bias_prototypes,
    )
    n_train = int(np.floor(spec.train_fraction * spec.per_user))
    for user in range(spec.N):
        x = rng.standard_normal((spec.per_user, spec.d_x))
        scores = clean_scores(task, x, biases[user])
        y = np.argmax(scores, axis=1)

        flip = rng.random(spec.per_user) < spec.label_noise
        shift = rng.integers(1, spec.C, size=spec.per_user)
        y = np.where(flip, (y + shift) % spec.C, y)

        samples = [LabeledSample(x=x[i], y=int(y[i])) for i in range(spec.per_user)]
        task.devices.append(
            DeviceDataset(
                local_user_id=user,
                train=samples[:n_train],
                test=samples[n_train:],
                true_bias=biases[user].copy(),
            )
        )

    logger.info(
        f"Generated synthetic task: {spec.N} users x {spec.per_user} samples, "
        f"kappa={spec.kappa}, label_noise={spec.label_noise}"
    )
    return task


def oracle_accuracy(task: SyntheticTask, use_bias: bool = True, split: str = "test") -> float:
    """
    Accuracy of the generator's own argmax rule on the chosen split.

    With use_bias the rule sees each user's true bias; without it the rule
    scores w_c . x alone, which is the Bayes rule when kappa = 0.
    """
    correct = 0
    total = 0
    for device in task.devices:
        samples = device.test if split == "test" else device.train
        if not samples:
            continue
        x = np.stack([s.x for s in samples])
        y = np.array([s.y for s in samples])
        bias = device.true_bias if use_bias else np.zeros_like(device.true_bias)
        predicted = np.argmax(clean_scores(task, x, bias), axis=1)
        correct += int(np.sum(predicted == y))
        total += len(samples)
    return correct / total if total else 0.0


def pooled_samples(task: SyntheticTask, split: str = "train") -> List[LabeledSample]:
    """All users' samples without embeddings, the bootstrap training set."""
    pooled: List[LabeledSample] = []
    for device in task.devices:
        pooled.extend(device.train if split == "train" else device.test)
    return pooled
