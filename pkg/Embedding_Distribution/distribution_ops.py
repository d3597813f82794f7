"""
Operations on embedding distributions: sampling, densities, CDFs, the
reparameterization map u = g_theta(xi) and its parameter gradients, and
density/CDF evaluation of finite mixtures.
"""

import logging
from typing import Optional, Tuple, Union

import numpy as np
from scipy import special

from . import special_functions
from .errors import DomainError, NumericalError, ShapeError
from .models.distribution_models import (
    BetaPerDim,
    DiagGaussian,
    EmbeddingDistribution,
    MixtureRepresentation,
    NoiseDraw,
    ParameterGradient,
)

logger = logging.getLogger(__name__)

# Beta samples are kept this far from the boundary so log densities stay finite
BETA_SAMPLE_EPS = 1e-9
# Uniform base noise is kept strictly inside (0, 1)
UNIFORM_NOISE_EPS = 1e-12
# Below this density the implicit gradient du/dtheta is unusable
MIN_IMPLICIT_DENSITY = 1e-12


def _check_dim(dist: EmbeddingDistribution, u: np.ndarray) -> None:
    if u.shape[-1] != dist.d:
        raise ShapeError(f"expected last dimension {dist.d}, got shape {u.shape}")


def sample(
    dist: EmbeddingDistribution,
    rng: np.random.Generator,
    size: Optional[int] = None,
) -> np.ndarray:
    """
    Draw embeddings from a distribution.

    Args:
        dist: Gaussian or Beta distribution
        rng: Caller-owned random stream
        size: Number of draws; None for a single vector

    Returns:
        Array of shape (d,) or (size, d)
    """
    shape = (dist.d,) if size is None else (size, dist.d)
    if isinstance(dist, DiagGaussian):
        if dist.sigma == 0:
            return np.broadcast_to(dist.mean, shape).copy()
        return dist.mean + dist.sigma * rng.standard_normal(shape)

    draws = rng.beta(dist.alpha, dist.beta, size=shape)
    return np.clip(draws, BETA_SAMPLE_EPS, 1.0 - BETA_SAMPLE_EPS)


def log_pdf(dist: EmbeddingDistribution, u: np.ndarray) -> Union[float, np.ndarray]:
    """
    Joint log density, the sum of per-dimension marginal log densities.

    A zero-variance Gaussian is treated as a point mass: log density 0 at the
    mean and -inf elsewhere.

    Args:
        dist: The distribution
        u: One embedding (d,) or a stack (n, d)

    Returns:
        Scalar for a single embedding, array (n,) for a stack

    Raises:
        DomainError: If a Beta-mode coordinate is outside (0, 1)
    """
    u = np.asarray(u, dtype=float)
    _check_dim(dist, u)

    if isinstance(dist, DiagGaussian):
        if dist.sigma == 0:
            hit = np.all(u == dist.mean, axis=-1)
            result = np.where(hit, 0.0, -np.inf)
        else:
            z = (u - dist.mean) / dist.sigma
            result = np.sum(special_functions.std_normal_log_pdf(z), axis=-1) - dist.d * np.log(
                dist.sigma
            )
    else:
        if np.any(u <= 0.0) or np.any(u >= 1.0):
            raise DomainError("Beta-mode embedding coordinates must lie strictly inside (0, 1)")
        result = np.sum(special_functions.beta_log_pdf(u, dist.alpha, dist.beta), axis=-1)

    return float(result) if np.ndim(result) == 0 else result


def cdf_marginal(dist: EmbeddingDistribution, dim: int, x: Union[float, np.ndarray]):
    """
    Marginal CDF F(x) of one embedding dimension.

    Args:
        dist: The distribution
        dim: Dimension index, < d
        x: Point(s); values outside the support give 0 or 1

    Returns:
        CDF value(s) in [0, 1]
    """
    if not 0 <= dim < dist.d:
        raise ShapeError(f"dimension {dim} out of range for d={dist.d}")

    if isinstance(dist, DiagGaussian):
        x = np.asarray(x, dtype=float)
        if dist.sigma == 0:
            result = np.where(x >= dist.mean[dim], 1.0, 0.0)
            return float(result) if result.ndim == 0 else result
        return special_functions.std_normal_cdf((x - dist.mean[dim]) / dist.sigma)

    return special_functions.reg_inc_beta(x, dist.alpha[dim], dist.beta[dim])


def draw_noise(
    dist: EmbeddingDistribution,
    rng: np.random.Generator,
    size: Optional[int] = None,
) -> NoiseDraw:
    """
    Draw base noise for ``reparam_sample``: standard normal for Gaussian mode,
    uniform on (0, 1) for Beta mode.
    """
    shape = (dist.d,) if size is None else (size, dist.d)
    if isinstance(dist, DiagGaussian):
        return NoiseDraw(values=rng.standard_normal(shape), kind=dist.kind)
    values = np.clip(rng.random(shape), UNIFORM_NOISE_EPS, 1.0 - UNIFORM_NOISE_EPS)
    return NoiseDraw(values=values, kind=dist.kind)


def reparam_sample(dist: EmbeddingDistribution, noise: NoiseDraw) -> np.ndarray:
    """
    Deterministic map from base noise to an embedding.

    Gaussian: u_i = mean_i + sigma * xi_i. Beta: u_i is the inverse Beta CDF of
    xi_i.

    Raises:
        ShapeError: If the noise width differs from d
        ConvergenceError: From the inverse incomplete beta
    """
    xi = noise.values
    _check_dim(dist, xi)
    if isinstance(dist, DiagGaussian):
        return dist.mean + dist.sigma * xi
    return special_functions.inverse_reg_inc_beta(xi, dist.alpha, dist.beta)


def reparam_jacobian(
    dist: BetaPerDim, noise: NoiseDraw
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Implicit reparameterization derivatives for Beta mode.

    Since u solves I_u(a, b) = xi, du/da = -(dI/da) / pdf(u), likewise for b.

    Returns:
        (u, du_dalpha, du_dbeta, valid) with the shape of noise.values; valid
        is False where pdf(u) underflows and the derivatives are set to zero.
    """
    u = reparam_sample(dist, noise)
    alpha = np.broadcast_to(dist.alpha, u.shape)
    beta = np.broadcast_to(dist.beta, u.shape)
    d_da, d_db = special_functions.reg_inc_beta_param_derivatives(u, alpha, beta)

    with np.errstate(divide="ignore", under="ignore"):
        density = special_functions.beta_pdf(np.clip(u, 1e-300, 1.0 - 1e-16), alpha, beta)
    valid = np.isfinite(density) & (density >= MIN_IMPLICIT_DENSITY)
    safe = np.where(valid, density, 1.0)
    du_dalpha = np.where(valid, -d_da / safe, 0.0)
    du_dbeta = np.where(valid, -d_db / safe, 0.0)
    return u, du_dalpha, du_dbeta, valid


def reparam_grad_params(
    dist: EmbeddingDistribution, noise: NoiseDraw, upstream: np.ndarray
) -> ParameterGradient:
    """
    Chain a loss gradient with respect to the embedding back to the
    distribution parameters.

    Args:
        dist: The distribution that produced u = g_theta(xi)
        noise: The single noise draw xi (shape (d,))
        upstream: dl/du at u, shape (d,)

    Returns:
        Gradient laid out like ``dist.flat_parameters()``

    Raises:
        NumericalError: If a Beta sample sits where its density underflows;
            the offending coordinates are listed on the exception
    """
    upstream = np.asarray(upstream, dtype=float)
    _check_dim(dist, upstream)
    if not np.all(np.isfinite(upstream)):
        raise NumericalError("upstream gradient is not finite")

    if isinstance(dist, DiagGaussian):
        # sigma is fixed; only the mean is trained
        return ParameterGradient(kind=dist.kind, values=upstream.copy())

    _, du_dalpha, du_dbeta, valid = reparam_jacobian(dist, noise)
    if not valid.all():
        bad = np.flatnonzero(~valid)
        raise NumericalError(
            f"Beta sample density below {MIN_IMPLICIT_DENSITY} at coordinates {bad.tolist()}",
            coordinates=bad.tolist(),
        )
    return ParameterGradient(
        kind=dist.kind,
        values=np.concatenate([upstream * du_dalpha, upstream * du_dbeta]),
    )


def score_function_grad(
    dist: EmbeddingDistribution, u: np.ndarray, f_values: np.ndarray
) -> ParameterGradient:
    """
    Score-function (likelihood-ratio) gradient estimate f(u) * grad log p(u),
    averaged over the rows of u. Kept as a cross-check for the pathwise
    estimator.

    Args:
        dist: The distribution
        u: Samples, shape (n, d)
        f_values: Test-function values f(u), shape (n,)
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    f_values = np.asarray(f_values, dtype=float).reshape(-1, 1)
    _check_dim(dist, u)

    if isinstance(dist, DiagGaussian):
        if dist.sigma == 0:
            raise DomainError("score function is undefined for a zero-variance Gaussian")
        score = (u - dist.mean) / dist.sigma ** 2
        return ParameterGradient(kind=dist.kind, values=np.mean(f_values * score, axis=0))

    total = special.digamma(dist.alpha + dist.beta)
    score_alpha = np.log(u) - special.digamma(dist.alpha) + total
    score_beta = np.log1p(-u) - special.digamma(dist.beta) + total
    return ParameterGradient(
        kind=dist.kind,
        values=np.concatenate(
            [np.mean(f_values * score_alpha, axis=0), np.mean(f_values * score_beta, axis=0)]
        ),
    )


def distribution_moments(dist: EmbeddingDistribution) -> Tuple[np.ndarray, np.ndarray]:
    """Per-dimension mean and variance."""
    if isinstance(dist, DiagGaussian):
        return dist.mean.copy(), np.full(dist.d, dist.sigma ** 2)
    total = dist.alpha + dist.beta
    mean = dist.alpha / total
    var = dist.alpha * dist.beta / (total ** 2 * (total + 1.0))
    return mean, var


def mixture_pdf(mix: MixtureRepresentation, u: np.ndarray) -> np.ndarray:
    """Joint mixture density at one embedding or a stack of embeddings."""
    u = np.asarray(u, dtype=float)
    total = np.zeros(u.shape[:-1])
    for component in mix.components:
        total = total + component.weight * np.exp(log_pdf(component.dist, u))
    return total


def mixture_cdf_marginal(mix: MixtureRepresentation, dim: int, x: np.ndarray) -> np.ndarray:
    """Marginal CDF of one dimension of the mixture."""
    x = np.asarray(x, dtype=float)
    total = np.zeros(x.shape)
    for component in mix.components:
        total = total + component.weight * np.asarray(cdf_marginal(component.dist, dim, x))
    return total


def mixture_moments(mix: MixtureRepresentation) -> Tuple[np.ndarray, np.ndarray]:
    """Per-dimension mean and variance of the mixture (law of total variance)."""
    means = []
    second = []
    for component in mix.components:
        mean, var = distribution_moments(component.dist)
        means.append(component.weight * mean)
        second.append(component.weight * (var + mean ** 2))
    mean = np.sum(means, axis=0)
    return mean, np.sum(second, axis=0) - mean ** 2
