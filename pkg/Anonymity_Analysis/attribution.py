"""
The attribution adversary and the probabilistic bounds it is measured against.

The cloud sees one uploaded embedding at a time and tries to name the device
whose distribution produced it. The Bayes-optimal guess is the posterior
argmax over the device distributions; a nearest-mean guess is also provided.
Misattribution is then estimated by Monte Carlo and compared with the lower
bound 1 - Phi(eta * T * G / sigma) ** (N - 1) that holds for equal-sigma
Gaussians trained from a shared start with clipped steps.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.spatial.distance import pdist

from Embedding_Distribution import distribution_ops, special_functions
from Embedding_Distribution.errors import ConfigError, DomainError, ShapeError
from Embedding_Distribution.models.distribution_models import (
    BetaPerDim,
    DiagGaussian,
    EmbeddingDistribution,
)

from .models.report_models import AttackReport, ClosenessCheck, GapReport

logger = logging.getLogger(__name__)

PRIOR_SUM_TOL = 1e-9
# Rows per chunk when sampling for the closeness check
_CHUNK_ROWS = 100_000

Attacker = Callable[[Sequence[EmbeddingDistribution], np.ndarray, np.ndarray], np.ndarray]


def uniform_prior(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def dataset_size_prior(counts: Sequence[int]) -> np.ndarray:
    """Prior proportional to how many records each device uploaded."""
    counts = np.asarray(counts, dtype=float)
    if counts.sum() <= 0:
        raise ConfigError("dataset-size prior needs at least one record")
    return counts / counts.sum()


def _check_prior(prior: np.ndarray, n: int) -> np.ndarray:
    prior = np.asarray(prior, dtype=float)
    if prior.shape != (n,):
        raise ShapeError(f"prior has shape {prior.shape}, expected ({n},)")
    if np.any(prior < 0) or abs(prior.sum() - 1.0) > PRIOR_SUM_TOL:
        raise DomainError("prior must be non-negative and sum to 1")
    return prior


def _log_posterior_scores(
    dists: Sequence[EmbeddingDistribution], prior: np.ndarray, U: np.ndarray
) -> np.ndarray:
    """Unnormalized log posterior, shape (N, M)."""
    with np.errstate(divide="ignore"):
        log_prior = np.log(prior)
    scores = np.full((len(dists), U.shape[0]), -np.inf)
    inside = np.all((U > 0.0) & (U < 1.0), axis=1)
    for k, dist in enumerate(dists):
        if isinstance(dist, BetaPerDim):
            if inside.any():
                scores[k, inside] = distribution_ops.log_pdf(dist, U[inside])
        else:
            scores[k] = distribution_ops.log_pdf(dist, U)
        scores[k] = scores[k] + log_prior[k]
    return scores


def nearest_mean_batch(dists: Sequence[EmbeddingDistribution], U: np.ndarray) -> np.ndarray:
    """Index of the closest distribution mean for every row of U; ties go low."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    means = np.stack([distribution_ops.distribution_moments(d)[0] for d in dists])
    sq = np.sum((U[:, None, :] - means[None, :, :]) ** 2, axis=2)
    return np.argmin(sq, axis=1)


def posterior_argmax_batch(
    dists: Sequence[EmbeddingDistribution], prior: np.ndarray, U: np.ndarray
) -> np.ndarray:
    """
    Posterior-argmax attribution of every row of U.

    Zero-variance Gaussians act as point masses. A row that matches none of
    them has no finite posterior anywhere and falls back to the nearest mean.

    Raises:
        DomainError: If every distribution is Beta and a row leaves (0, 1)^d
    """
    U = np.atleast_2d(np.asarray(U, dtype=float))
    prior = _check_prior(prior, len(dists))
    if U.shape[1] != dists[0].d:
        raise ShapeError(f"embedding width {U.shape[1]} != d {dists[0].d}")
    if all(isinstance(d, BetaPerDim) for d in dists):
        if not np.all((U > 0.0) & (U < 1.0)):
            raise DomainError("embedding lies outside the support of every Beta distribution")

    scores = _log_posterior_scores(dists, prior, U)
    choice = np.argmax(scores, axis=0)
    dead = ~np.isfinite(scores).any(axis=0)
    if dead.any():
        choice[dead] = nearest_mean_batch(dists, U[dead])
    return choice


def posterior_argmax(
    dists: Sequence[EmbeddingDistribution], prior: np.ndarray, u: np.ndarray
) -> int:
    """
    Bayes-optimal guess of the source of one embedding:
    argmax_k log prior_k + log p_k(u), ties broken toward the lowest index.
    """
    return int(posterior_argmax_batch(dists, prior, np.asarray(u, dtype=float)[None, :])[0])


def nearest_mean(dists: Sequence[EmbeddingDistribution], u: np.ndarray) -> int:
    return int(nearest_mean_batch(dists, np.asarray(u, dtype=float)[None, :])[0])


def _attack_rows(
    attacker: str, dists: Sequence[EmbeddingDistribution], prior: np.ndarray, U: np.ndarray
) -> np.ndarray:
    if attacker == "posterior":
        return posterior_argmax_batch(dists, prior, U)
    if attacker == "nearest_mean":
        return nearest_mean_batch(dists, U)
    raise ConfigError(f"Unknown attacker: {attacker!r}")


def misattribution_lower_bound(eta: float, T: int, G: float, sigma: float, N: int) -> float:
    """
    Lower bound on the misattribution probability of the uniform-prior
    attacker against N equal-sigma Gaussians whose means each moved at most
    eta * T * G from a shared start.

    Returns:
        1 - Phi(eta * T * G / sigma) ** (N - 1); 0 for a single user
    """
    if sigma <= 0:
        raise DomainError("the misattribution bound needs sigma > 0")
    if N < 1:
        raise DomainError("the misattribution bound needs at least one user")
    phi = special_functions.std_normal_cdf(eta * T * G / sigma)
    return float(1.0 - phi ** (N - 1))


def _common_sigma(dists: Sequence[EmbeddingDistribution]) -> Optional[float]:
    if not all(isinstance(d, DiagGaussian) for d in dists):
        return None
    sigmas = {d.sigma for d in dists}
    return sigmas.pop() if len(sigmas) == 1 else None


def misattribution_mc(
    dists: Sequence[EmbeddingDistribution],
    prior: Optional[np.ndarray] = None,
    M: int = 1000,
    rng: Optional[np.random.Generator] = None,
    eta: Optional[float] = None,
    T: Optional[int] = None,
    G: Optional[float] = None,
    attacker: str = "posterior",
    prior_mode: str = "uniform",
    workers: int = 1,
) -> AttackReport:
    """
    Estimate how often the attacker names the wrong device.

    Every user gets its own random stream spawned from ``rng`` so the result
    does not depend on the worker count.

    Args:
        dists: One distribution per device
        prior: Attacker prior; uniform when None
        M: Draws per user
        rng: Random stream
        eta, T, G: Training constants; when all three are given and the
            distributions are equal-sigma Gaussians with sigma > 0, the
            report carries the matching lower bound
        attacker: "posterior" or "nearest_mean"
        prior_mode: Label recorded on the report
        workers: Thread pool size for the per-user loop
    """
    if M < 1:
        raise ConfigError("misattribution needs at least one draw per user")
    n = len(dists)
    prior = uniform_prior(n) if prior is None else _check_prior(prior, n)
    rng = rng or np.random.default_rng(0)
    streams = [np.random.default_rng(s) for s in rng.integers(0, 2 ** 63 - 1, size=n)]

    def attack_user(user: int) -> int:
        U = distribution_ops.sample(dists[user], streams[user], size=M)
        return int(np.sum(_attack_rows(attacker, dists, prior, U) != user))

    if workers <= 1:
        wrong = [attack_user(user) for user in range(n)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            wrong = list(executor.map(attack_user, range(n)))

    per_user = [w / M for w in wrong]
    bound = None
    sigma = _common_sigma(dists)
    if None not in (eta, T, G) and sigma is not None and sigma > 0:
        bound = misattribution_lower_bound(eta, T, G, sigma, n)

    report = AttackReport(
        empirical_misattribution=float(np.mean(per_user)),
        theoretical_bound=bound,
        samples_per_user=M,
        per_user_rates=per_user,
        misattributed=int(sum(wrong)),
        total=n * M,
        attacker=attacker,
        prior_mode=prior_mode,
    )
    logger.info(
        f"Attack ({attacker}, {prior_mode} prior): misattribution "
        f"{report.empirical_misattribution:.4f}, bound {bound if bound is not None else 'n/a'}"
    )
    return report


def closer_to_own_mean_probability(distance: float, sigma: float) -> float:
    """
    Probability that a draw from N(mu_n, sigma^2 I) is closer to mu_n than to
    another mean at the given distance: Phi(distance / (2 sigma)). Does not
    depend on the dimension.
    """
    if distance < 0 or sigma <= 0:
        raise DomainError("distance must be >= 0 and sigma > 0")
    if np.isinf(distance):
        return 1.0
    return float(special_functions.std_normal_cdf(distance / (2.0 * sigma)))


def closer_to_own_mean_frequency(
    distance: float,
    sigma: float,
    d: int,
    n_draws: int,
    rng: np.random.Generator,
) -> float:
    """Monte Carlo frequency of the event whose probability is given above."""
    direction = rng.standard_normal(d)
    direction /= np.linalg.norm(direction)
    other = distance * direction
    closer = 0
    remaining = n_draws
    while remaining > 0:
        rows = min(remaining, _CHUNK_ROWS)
        u = sigma * rng.standard_normal((rows, d))
        closer += int(np.sum(np.sum(u ** 2, axis=1) < np.sum((u - other) ** 2, axis=1)))
        remaining -= rows
    return closer / n_draws


def check_closeness(
    distance: float,
    sigma: float,
    d: int,
    n_draws: int,
    rng: np.random.Generator,
    tol: float = 0.005,
) -> ClosenessCheck:
    closed = closer_to_own_mean_probability(distance, sigma)
    empirical = closer_to_own_mean_frequency(distance, sigma, d, n_draws, rng)
    error = abs(closed - empirical)
    return ClosenessCheck(
        distance=distance,
        sigma=sigma,
        d=d,
        n_draws=n_draws,
        closed_form=closed,
        empirical=empirical,
        abs_error=error,
        passed=error <= tol,
    )


def pairwise_gap_check(
    dists: Sequence[EmbeddingDistribution], eta: float, T: int, G: float, tol: float = 1e-9
) -> GapReport:
    """
    Largest distance between any two trained means, against 2 * eta * T * G.

    Raises:
        ConfigError: If any distribution is not Gaussian
    """
    if not all(isinstance(d, DiagGaussian) for d in dists):
        raise ConfigError("pairwise gap check applies to Gaussian distributions only")
    bound = 2.0 * eta * T * G
    if len(dists) < 2:
        return GapReport(max_gap=0.0, bound=bound, n_pairs=0, violations=0, passed=True)
    gaps = pdist(np.stack([d.mean for d in dists]))
    violations = int(np.sum(gaps > bound + tol))
    report = GapReport(
        max_gap=float(gaps.max()),
        bound=bound,
        n_pairs=len(gaps),
        violations=violations,
        passed=violations == 0,
    )
    if not report.passed:
        logger.error(f"{violations} pair(s) exceed the mean gap bound {bound:.6g}")
    return report


def attack_labels(
    dists: Sequence[EmbeddingDistribution],
    U: np.ndarray,
    prior: Optional[np.ndarray] = None,
    attacker: str = "posterior",
) -> List[int]:
    """Attacker guesses for an arbitrary stack of observed embeddings."""
    prior = uniform_prior(len(dists)) if prior is None else prior
    return [int(k) for k in _attack_rows(attacker, dists, prior, np.atleast_2d(U))]
