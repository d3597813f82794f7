"""
Two-dimensional projection of sampled user embeddings for plotting.

Samples a few embeddings per user, centers them, and projects onto the top
two principal components found by power iteration with deflation. The user
column of the CSV comes from the harness's own bookkeeping and is only there
to colour a plot.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from Embedding_Distribution import distribution_ops
from Embedding_Distribution.errors import ConvergenceError, ShapeError
from Embedding_Distribution.models.distribution_models import EmbeddingDistribution

from .reports import write_csv

logger = logging.getLogger(__name__)


def power_iteration_pca(
    X: np.ndarray,
    k: int = 2,
    tol: float = 1e-9,
    max_iterations: int = 10000,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Top-k principal directions of the rows of X.

    Each direction is iterated until the Rayleigh quotient changes by at most
    tol relative to its value, then deflated out of the covariance.

    Returns:
        (components (k, d) with unit rows, eigenvalues (k,))

    Raises:
        ConvergenceError: If a direction does not settle within max_iterations
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] < k:
        raise ShapeError(f"need a 2-D array with at least {k} columns, got shape {X.shape}")
    rng = rng or np.random.default_rng(0)
    centered = X - X.mean(axis=0)
    cov = centered.T @ centered / max(len(X), 1)

    components = []
    eigenvalues = []
    for _ in range(k):
        v = rng.standard_normal(cov.shape[0])
        v /= np.linalg.norm(v)
        value = float(v @ cov @ v)
        for _ in range(max_iterations):
            w = cov @ v
            norm = np.linalg.norm(w)
            if norm < 1e-300:
                value = 0.0
                break
            v = w / norm
            new_value = float(v @ cov @ v)
            if abs(new_value - value) <= tol * max(abs(new_value), 1e-300):
                value = new_value
                break
            value = new_value
        else:
            raise ConvergenceError(f"power iteration did not converge in {max_iterations} iterations")
        components.append(v)
        eigenvalues.append(value)
        cov = cov - value * np.outer(v, v)

    return np.stack(components), np.array(eigenvalues)


def project(X: np.ndarray, components: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return (X - X.mean(axis=0)) @ components.T


def between_within_ratio(points: np.ndarray, labels: Sequence[int]) -> float:
    """
    Mean squared distance of group centroids from the grand mean, divided by
    the mean squared distance of points from their own centroid.
    """
    points = np.asarray(points, dtype=float)
    labels = np.asarray(labels)
    grand = points.mean(axis=0)
    groups = np.unique(labels)
    centroids = np.stack([points[labels == g].mean(axis=0) for g in groups])
    between = float(np.mean(np.sum((centroids - grand) ** 2, axis=1)))
    own = centroids[np.searchsorted(groups, labels)]
    within = float(np.mean(np.sum((points - own) ** 2, axis=1)))
    if within == 0.0:
        return float("inf") if between > 0 else 0.0
    return between / within


@dataclass
class ProjectionResult:
    points: np.ndarray
    labels: np.ndarray
    eigenvalues: np.ndarray
    ratio: float


def export_embedding_projection(
    dists: Sequence[EmbeddingDistribution],
    samples_per_user: int = 10,
    out_path: Optional[str] = None,
    rng: Optional[np.random.Generator] = None,
    tol: float = 1e-9,
    max_iterations: int = 10000,
) -> ProjectionResult:
    """
    Sample, project to 2-D, and optionally write x,y,user rows.

    Raises:
        ConvergenceError: From the power iteration
    """
    if samples_per_user < 1:
        raise ShapeError("samples_per_user must be >= 1")
    rng = rng or np.random.default_rng(0)
    samples = np.concatenate([distribution_ops.sample(d, rng, size=samples_per_user) for d in dists])
    labels = np.repeat(np.arange(len(dists)), samples_per_user)
    components, eigenvalues = power_iteration_pca(samples, 2, tol, max_iterations, rng)
    points = project(samples, components)
    ratio = between_within_ratio(points, labels)

    if out_path:
        write_csv(out_path, ["x", "y", "user"], [(p[0], p[1], int(u)) for p, u in zip(points, labels)])
    logger.info(f"Projected {len(points)} embeddings; between/within variance ratio {ratio:.3f}")
    return ProjectionResult(points=points, labels=labels, eigenvalues=eigenvalues, ratio=ratio)
