"""
User-entropy analysis: which test samples does personalization matter for?

For every test sample, K random users each contribute one embedding and the
served model predicts once per embedding. The entropy of those K predicted
classes is high when the prediction depends on who asks. Accuracy under the
true owner's embedding is then bucketed by that entropy.
"""

import logging
from typing import Optional, Sequence

import numpy as np
from scipy.stats import entropy

from Embedding_Distribution import distribution_ops
from Embedding_Distribution.errors import ConfigError
from Embedding_Distribution.models.distribution_models import EmbeddingDistribution
from Personalized_Model import classifier
from Personalized_Model.models.model_entities import DeviceDataset, FrozenModel

from .models.report_models import EntropyBucketReport

logger = logging.getLogger(__name__)

DEFAULT_BUCKETS = 6


def default_bucket_edges(K: int, n_classes: int, n_buckets: int = DEFAULT_BUCKETS) -> np.ndarray:
    """Equal-width buckets from 0 to the largest attainable entropy ln(min(K, C))."""
    return np.linspace(0.0, np.log(min(K, n_classes)), n_buckets + 1)


def prediction_entropy(predictions: np.ndarray, n_classes: int) -> float:
    """Shannon entropy (nats) of the empirical distribution of predicted classes."""
    counts = np.bincount(np.asarray(predictions, dtype=int), minlength=n_classes)
    return float(entropy(counts))


def user_entropy_analysis(
    model: FrozenModel,
    dists: Sequence[EmbeddingDistribution],
    devices: Sequence[DeviceDataset],
    K: int = 20,
    bucket_edges: Optional[Sequence[float]] = None,
    rng: Optional[np.random.Generator] = None,
    baseline_model: Optional[FrozenModel] = None,
) -> EntropyBucketReport:
    """
    Bucket test accuracy by user entropy.

    Args:
        model: Served personalized model
        dists: One trained distribution per device
        devices: Device datasets; their test splits are analysed
        K: Users sampled per test item, without replacement
        bucket_edges: Increasing edges; entropies outside fall in the end buckets
        rng: Random stream for user choice and embedding draws
        baseline_model: If given, also bucket its accuracy with a zero
            embedding so per-bucket lifts can be read off the report

    Raises:
        ConfigError: If K < 2, K exceeds the number of users, or the inputs
            disagree in length
    """
    n_users = len(dists)
    if len(devices) != n_users:
        raise ConfigError(f"{len(devices)} devices but {n_users} distributions")
    if K < 2 or K > n_users:
        raise ConfigError(f"K must be in [2, {n_users}], got {K}")
    rng = rng or np.random.default_rng(0)
    edges = np.asarray(
        default_bucket_edges(K, model.n_classes) if bucket_edges is None else bucket_edges,
        dtype=float,
    )
    n_buckets = len(edges) - 1

    counts = np.zeros(n_buckets, dtype=int)
    hits = np.zeros(n_buckets, dtype=int)
    baseline_hits = np.zeros(n_buckets, dtype=int)
    zero = np.zeros(model.d_u)

    for owner, device in enumerate(devices):
        X, y = device.test_arrays()
        if len(y) == 0:
            continue
        own = distribution_ops.sample(dists[owner], rng, size=len(y))
        correct = classifier.predict(model, own, X) == y
        if baseline_model is not None:
            baseline_correct = classifier.predict(baseline_model, zero, X) == y

        for j in range(len(y)):
            chosen = rng.choice(n_users, size=K, replace=False)
            U = np.stack([distribution_ops.sample(dists[k], rng) for k in chosen])
            h = prediction_entropy(classifier.predict(model, U, X[j]), model.n_classes)
            bucket = int(np.clip(np.searchsorted(edges, h, side="right") - 1, 0, n_buckets - 1))
            counts[bucket] += 1
            hits[bucket] += int(correct[j])
            if baseline_model is not None:
                baseline_hits[bucket] += int(baseline_correct[j])

    accuracy = hits / np.maximum(counts, 1)
    baseline = baseline_hits / np.maximum(counts, 1)

    report = EntropyBucketReport(
        bucket_edges=edges.tolist(),
        per_bucket_accuracy=accuracy.tolist(),
        per_bucket_count=counts.tolist(),
        K=K,
        per_bucket_baseline_accuracy=baseline.tolist() if baseline_model is not None else None,
    )
    logger.info(f"User entropy over {report.total_count} test samples, counts {counts.tolist()}")
    return report
