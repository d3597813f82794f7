"""
Cloud-side model work: bootstrap training before any embeddings exist,
fine-tuning on the collected anonymous dataset, serving and evaluation.
"""

import logging
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from Embedding_Distribution import distribution_ops
from Embedding_Distribution.errors import ConfigError, ShapeError
from Embedding_Distribution.models.distribution_models import EmbeddingDistribution
from Personalized_Model import classifier
from Personalized_Model.models.model_entities import (
    CloudModel,
    DeviceDataset,
    FrozenModel,
    LabeledSample,
)

from .models.record_models import CloudDataset

logger = logging.getLogger(__name__)


class EvaluationReport(BaseModel):
    """Micro-averaged and per-user test accuracy."""
    accuracy: float = Field(ge=0.0, le=1.0)
    per_user_accuracy: List[float]
    n_test: int


def _learning_rate(base: float, schedule: str, step: int, total_steps: int) -> float:
    if schedule == "constant":
        return base
    if schedule == "linear":
        return base * max(0.0, 1.0 - step / max(total_steps, 1))
    raise ConfigError(f"Unknown learning-rate schedule: {schedule!r}")


def _sgd(
    model: CloudModel,
    E: np.ndarray,
    X: np.ndarray,
    y: np.ndarray,
    epochs: int,
    lr: float,
    batch_size: int,
    rng: np.random.Generator,
    lr_schedule: str = "constant",
) -> CloudModel:
    """Mini-batch SGD on cross-entropy; records full-data loss per epoch."""
    n = len(y)
    if n == 0 or epochs <= 0:
        return model
    batches_per_epoch = int(np.ceil(n / batch_size))
    total_steps = epochs * batches_per_epoch

    model.loss_history.append(classifier.mean_loss(model, E, X, y))
    step = 0
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            grad = classifier.grad_model(model, E[idx], X[idx], y[idx])
            rate = _learning_rate(lr, lr_schedule, step, total_steps)
            model.W1 -= rate * grad.W1
            model.b1 -= rate * grad.b1
            model.W2 -= rate * grad.W2
            model.b2 -= rate * grad.b2
            step += 1
        model.loss_history.append(classifier.mean_loss(model, E, X, y))
        logger.debug(f"Epoch {epoch + 1}/{epochs}: loss {model.loss_history[-1]:.5f}")
    return model


def bootstrap_train(
    model: FrozenModel,
    samples: Sequence[LabeledSample],
    epochs: int,
    lr: float,
    batch_size: int = 64,
    seed: int = 0,
    lr_schedule: str = "constant",
) -> CloudModel:
    """
    Train the initial cloud model with the embedding slot set to zero.

    Args:
        model: Initial weights (copied, never modified)
        samples: Plain (x, y) samples without embeddings
        epochs: Passes over the samples; 0 returns the weights unchanged
        lr: SGD learning rate
        batch_size: Mini-batch size
        seed: Seed of the batch shuffling

    Returns:
        Trainable copy of the trained model
    """
    cloud = model.thaw()
    if not samples:
        return cloud
    X = np.stack([s.x for s in samples])
    y = np.array([s.y for s in samples], dtype=int)
    if X.shape[1] != cloud.d_x:
        raise ShapeError(f"feature width {X.shape[1]} != d_x {cloud.d_x}")
    E = np.zeros((len(y), cloud.d_u))
    _sgd(cloud, E, X, y, epochs, lr, batch_size, np.random.default_rng(seed), lr_schedule)
    if cloud.loss_history:
        logger.info(
            f"Bootstrap training: {epochs} epochs, loss {cloud.loss_history[0]:.4f} -> "
            f"{cloud.loss_history[-1]:.4f}"
        )
    return cloud


def finetune(
    model: FrozenModel,
    data: CloudDataset,
    epochs: int,
    lr: float,
    batch_size: int = 64,
    seed: int = 0,
    lr_schedule: str = "constant",
) -> CloudModel:
    """
    Fine-tune every weight on the collected dataset. Reads nothing but the
    dataset and the hyperparameters.

    Returns:
        Trainable copy of the fine-tuned model
    """
    cloud = model.thaw()
    if len(data) == 0:
        return cloud
    E, X, y = data.arrays()
    if E.shape[1] != cloud.d_u or X.shape[1] != cloud.d_x:
        raise ShapeError(
            f"dataset widths (e={E.shape[1]}, x={X.shape[1]}) do not match model "
            f"(d_u={cloud.d_u}, d_x={cloud.d_x})"
        )
    _sgd(cloud, E, X, y, epochs, lr, batch_size, np.random.default_rng(seed), lr_schedule)
    if cloud.loss_history:
        logger.info(
            f"Fine-tuned on {len(data)} records for {epochs} epochs, loss "
            f"{cloud.loss_history[0]:.4f} -> {cloud.loss_history[-1]:.4f}"
        )
    return cloud


def serve(model: FrozenModel, e: np.ndarray, x: np.ndarray) -> Tuple[int, np.ndarray]:
    """
    Inference for one uploaded [e; x].

    Returns:
        (predicted class with ties to the lowest index, probability vector)
    """
    e = np.asarray(e, dtype=float)
    x = np.asarray(x, dtype=float)
    if e.ndim != 1 or x.ndim != 1:
        raise ShapeError("serve takes a single embedding and a single feature vector")
    probs = classifier.forward(model, e, x)
    return int(np.argmax(probs)), probs


EmbeddingDrawer = Callable[[int, np.random.Generator], np.ndarray]


def evaluate(
    model: FrozenModel,
    devices: Sequence[DeviceDataset],
    dists: Sequence[EmbeddingDistribution],
    rng: np.random.Generator,
    drawers: Optional[Sequence[EmbeddingDrawer]] = None,
) -> EvaluationReport:
    """
    Test accuracy with a fresh embedding per query from each device's
    distribution.

    Args:
        model: Served model
        devices: Device datasets (test splits are used)
        dists: One trained distribution per device
        rng: Random stream for embedding draws
        drawers: Optional per-device callables (count, rng) -> embeddings that
            replace fresh sampling, e.g. an offline pre-sampled cache

    Raises:
        ConfigError: On a length mismatch between devices and distributions
    """
    if len(devices) != len(dists):
        raise ConfigError(f"{len(devices)} devices but {len(dists)} distributions")
    if drawers is not None and len(drawers) != len(devices):
        raise ConfigError(f"{len(devices)} devices but {len(drawers)} embedding drawers")

    per_user: List[float] = []
    correct = 0
    total = 0
    for index, (device, dist) in enumerate(zip(devices, dists)):
        X, y = device.test_arrays()
        if len(y) == 0:
            per_user.append(0.0)
            continue
        if drawers is not None:
            E = drawers[index](len(y), rng)
        else:
            E = distribution_ops.sample(dist, rng, size=len(y))
        hits = int(np.sum(classifier.predict(model, E, X) == y))
        per_user.append(hits / len(y))
        correct += hits
        total += len(y)

    accuracy = correct / total if total else 0.0
    logger.info(f"Evaluated {len(devices)} devices: accuracy {accuracy:.4f} on {total} samples")
    return EvaluationReport(accuracy=accuracy, per_user_accuracy=per_user, n_test=total)


def evaluate_fixed_embedding(
    model: FrozenModel,
    devices: Sequence[DeviceDataset],
    embedding: Optional[np.ndarray] = None,
) -> EvaluationReport:
    """Test accuracy with one embedding (zeros by default) for every query."""
    embedding = np.zeros(model.d_u) if embedding is None else np.asarray(embedding, dtype=float)
    per_user: List[float] = []
    correct = 0
    total = 0
    for device in devices:
        X, y = device.test_arrays()
        if len(y) == 0:
            per_user.append(0.0)
            continue
        hits = int(np.sum(classifier.predict(model, embedding, X) == y))
        per_user.append(hits / len(y))
        correct += hits
        total += len(y)
    return EvaluationReport(
        accuracy=correct / total if total else 0.0, per_user_accuracy=per_user, n_test=total
    )
