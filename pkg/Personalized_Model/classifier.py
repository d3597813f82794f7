"""
Forward pass, cross-entropy loss and analytic gradients of the embedding
classifier h([u; x]) = softmax(W2^T tanh(W1^T [u; x] + b1) + b2).

All functions accept a single example (vectors) or a batch (2-D arrays with
one row per example); batch gradients are averaged over rows.
"""

import logging
from typing import Tuple, Union

import numpy as np
from scipy import special

from Embedding_Distribution.errors import ShapeError

from .models.model_entities import FrozenModel, ModelGradient

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


def _prepare(model: FrozenModel, u: np.ndarray, x: np.ndarray) -> Tuple[np.ndarray, bool]:
    u = np.asarray(u, dtype=float)
    x = np.asarray(x, dtype=float)
    single = u.ndim == 1 and x.ndim == 1
    u2 = np.atleast_2d(u)
    x2 = np.atleast_2d(x)
    if u2.shape[1] != model.d_u:
        raise ShapeError(f"embedding width {u2.shape[1]} != d_u {model.d_u}")
    if x2.shape[1] != model.d_x:
        raise ShapeError(f"feature width {x2.shape[1]} != d_x {model.d_x}")
    if u2.shape[0] != x2.shape[0]:
        if u2.shape[0] == 1:
            u2 = np.broadcast_to(u2, (x2.shape[0], model.d_u))
        elif x2.shape[0] == 1:
            x2 = np.broadcast_to(x2, (u2.shape[0], model.d_x))
        else:
            raise ShapeError(f"batch sizes differ: {u2.shape[0]} vs {x2.shape[0]}")
    return np.concatenate([u2, x2], axis=1), single


def _forward_cache(model: FrozenModel, z: np.ndarray):
    hidden = np.tanh(z @ model.W1 + model.b1)
    logits = hidden @ model.W2 + model.b2
    return hidden, special.softmax(logits, axis=1)


def forward(model: FrozenModel, u: np.ndarray, x: np.ndarray) -> np.ndarray:
    """
    Class probabilities for [u; x].

    Args:
        model: The classifier
        u: Embedding (d_u,) or batch (n, d_u)
        x: Features (d_x,) or batch (n, d_x)

    Returns:
        Probability vector (C,) or matrix (n, C)
    """
    z, single = _prepare(model, u, x)
    _, probs = _forward_cache(model, z)
    return probs[0] if single else probs


def loss(probs: np.ndarray, y: Union[int, np.ndarray]) -> Union[float, np.ndarray]:
    """Cross-entropy -log(probs[y]) with probabilities floored at 1e-12."""
    probs = np.asarray(probs, dtype=float)
    if probs.ndim == 1:
        return float(-np.log(max(probs[int(y)], PROB_FLOOR)))
    y = np.asarray(y, dtype=int)
    picked = probs[np.arange(probs.shape[0]), y]
    return -np.log(np.maximum(picked, PROB_FLOOR))


def _logit_gradient(probs: np.ndarray, y: np.ndarray) -> np.ndarray:
    grad = probs.copy()
    grad[np.arange(probs.shape[0]), y] -= 1.0
    return grad


def _labels(y, n: int, n_classes: int) -> np.ndarray:
    labels = np.broadcast_to(np.asarray(y, dtype=int), (n,))
    if np.any(labels < 0) or np.any(labels >= n_classes):
        raise ShapeError(f"labels must lie in [0, {n_classes})")
    return labels


def grad_input(model: FrozenModel, u: np.ndarray, x: np.ndarray, y) -> np.ndarray:
    """Per-example gradient of the loss with respect to the whole input [u; x]."""
    z, _ = _prepare(model, u, x)
    labels = _labels(y, z.shape[0], model.n_classes)
    hidden, probs = _forward_cache(model, z)
    d_hidden = (_logit_gradient(probs, labels) @ model.W2.T) * (1.0 - hidden ** 2)
    return d_hidden @ model.W1.T


def grad_embedding(model: FrozenModel, u: np.ndarray, x: np.ndarray, y) -> np.ndarray:
    """
    Analytic dl/du for loss(forward(model, u, x), y).

    Returns:
        (d_u,) for a single example, (n, d_u) per-example rows for a batch
    """
    _, single = _prepare(model, u, x)
    grads = grad_input(model, u, x, y)[:, : model.d_u]
    return grads[0] if single else grads


def grad_model(model: FrozenModel, u: np.ndarray, x: np.ndarray, y) -> ModelGradient:
    """
    Analytic gradient of the loss with respect to every weight, averaged over
    the batch.
    """
    z, _ = _prepare(model, u, x)
    labels = _labels(y, z.shape[0], model.n_classes)
    n = z.shape[0]
    hidden, probs = _forward_cache(model, z)
    d_logits = _logit_gradient(probs, labels) / n
    d_pre = (d_logits @ model.W2.T) * (1.0 - hidden ** 2)
    return ModelGradient(
        W1=z.T @ d_pre,
        b1=d_pre.sum(axis=0),
        W2=hidden.T @ d_logits,
        b2=d_logits.sum(axis=0),
    )


def mean_loss(model: FrozenModel, u: np.ndarray, x: np.ndarray, y) -> float:
    probs = np.atleast_2d(forward(model, u, x))
    return float(np.mean(loss(probs, np.broadcast_to(np.asarray(y, dtype=int), (probs.shape[0],)))))


def predict(model: FrozenModel, u: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Argmax class per row; ties go to the lowest index."""
    probs = np.atleast_2d(forward(model, u, x))
    return np.argmax(probs, axis=1)
