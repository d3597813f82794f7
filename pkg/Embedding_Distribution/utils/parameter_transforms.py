"""
Unconstrained storage for strictly positive Beta shape parameters.

Trainers keep raw values r and read the shapes through softplus(r) =
log(1 + exp(r)), so no gradient step can leave the positive half-line.
"""

import numpy as np

from ..models.distribution_models import BetaPerDim


def softplus(raw: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, raw)


def softplus_inverse(value: np.ndarray) -> np.ndarray:
    value = np.asarray(value, dtype=float)
    # log(exp(v) - 1), stable for large v
    return value + np.log(-np.expm1(-value))


def softplus_derivative(raw: np.ndarray) -> np.ndarray:
    """d softplus / d raw, the logistic sigmoid."""
    return 0.5 * (1.0 + np.tanh(0.5 * raw))


def beta_to_raw(dist: BetaPerDim) -> np.ndarray:
    """Raw parameters (alpha block then beta block) for a Beta distribution."""
    return softplus_inverse(dist.flat_parameters())


def beta_from_raw(raw: np.ndarray) -> BetaPerDim:
    shapes = softplus(np.asarray(raw, dtype=float))
    half = shapes.size // 2
    return BetaPerDim(alpha=shapes[:half], beta=shapes[half:])
