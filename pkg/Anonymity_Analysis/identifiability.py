"""
Constructive non-identifiability of Beta mixtures.

A Beta density splits exactly into two neighbouring Beta densities:

    f(x; a, b) = a/(a+b) * f(x; a+1, b) + b/(a+b) * f(x; a, b+1)

Applied to one coordinate of one component of a product-Beta mixture, this
yields a different list of weights and parameters with the same joint
density, so the collected embeddings cannot pin down the per-device
distributions that produced them.
"""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from Embedding_Distribution import distribution_ops
from Embedding_Distribution.errors import ConfigError, ShapeError
from Embedding_Distribution.models.distribution_models import (
    BetaPerDim,
    EmbeddingDistribution,
    MixtureComponent,
    MixtureRepresentation,
)

from .models.report_models import NonIdentifiabilityReport

logger = logging.getLogger(__name__)

GRID_LO = 1e-3
GRID_HI = 1.0 - 1e-3
# Joint-density grids above this many points are replaced by a seeded uniform scatter
MAX_JOINT_POINTS = 250_000


def decomposition_coefficients(alpha_i: float, beta_i: float) -> Tuple[float, float]:
    total = alpha_i + beta_i
    return alpha_i / total, beta_i / total


def beta_decompose(mix: MixtureRepresentation, n: int, i: int) -> MixtureRepresentation:
    """
    Replace component n by its two-term split along coordinate i. The new
    components take positions n and n + 1.

    Raises:
        ConfigError: If component n is not a product Beta
        ShapeError: If n or i is out of range
    """
    if not 0 <= n < len(mix):
        raise ShapeError(f"component {n} out of range for {len(mix)} components")
    component = mix.components[n]
    dist = component.dist
    if not isinstance(dist, BetaPerDim):
        raise ConfigError("only Beta components can be decomposed")
    if not 0 <= i < dist.d:
        raise ShapeError(f"coordinate {i} out of range for d={dist.d}")

    c1, c2 = decomposition_coefficients(float(dist.alpha[i]), float(dist.beta[i]))
    step = np.zeros(dist.d)
    step[i] = 1.0
    first = MixtureComponent(component.weight * c1, BetaPerDim(alpha=dist.alpha + step, beta=dist.beta))
    second = MixtureComponent(component.weight * c2, BetaPerDim(alpha=dist.alpha, beta=dist.beta + step))

    components = list(mix.components[:n]) + [first, second] + list(mix.components[n + 1:])
    return MixtureRepresentation(components)


def chained_decompositions(
    mix: MixtureRepresentation, steps: int, rng: np.random.Generator
) -> List[MixtureRepresentation]:
    """Apply beta_decompose repeatedly at random (component, coordinate) pairs."""
    chain = []
    current = mix
    for _ in range(steps):
        betas = [k for k, c in enumerate(current.components) if isinstance(c.dist, BetaPerDim)]
        if not betas:
            raise ConfigError("mixture has no Beta component to decompose")
        n = int(rng.choice(betas))
        i = int(rng.integers(current.d))
        current = beta_decompose(current, n, i)
        chain.append(current)
    return chain


def beta_witness(
    dists: Sequence[EmbeddingDistribution], max_components: int = 3, dims: int = 2
) -> MixtureRepresentation:
    """
    Equal-weight mixture of the first Beta distributions, restricted to their
    leading coordinates, small enough for a joint-density grid.
    """
    betas = [d for d in dists if isinstance(d, BetaPerDim)][:max_components]
    if not betas:
        raise ConfigError("no Beta distributions to build a witness from")
    dims = min(dims, betas[0].d)
    return MixtureRepresentation.uniform(
        [BetaPerDim(alpha=b.alpha[:dims], beta=b.beta[:dims]) for b in betas]
    )


def _all_beta(mix: MixtureRepresentation) -> bool:
    return all(isinstance(c.dist, BetaPerDim) for c in mix.components)


def _axis_ranges(m1: MixtureRepresentation, m2: MixtureRepresentation) -> np.ndarray:
    """Per-dimension (lo, hi) of the evaluation grid."""
    if _all_beta(m1) and _all_beta(m2):
        return np.tile([GRID_LO, GRID_HI], (m1.d, 1))
    lows, highs = [], []
    for mix in (m1, m2):
        for component in mix.components:
            mean, var = distribution_ops.distribution_moments(component.dist)
            spread = 6.0 * np.sqrt(np.maximum(var, 1e-12))
            lows.append(mean - spread)
            highs.append(mean + spread)
    return np.stack([np.min(lows, axis=0), np.max(highs, axis=0)], axis=1)


def _joint_points(
    ranges: np.ndarray, resolution: int, rng: Optional[np.random.Generator]
) -> np.ndarray:
    d = len(ranges)
    if resolution ** d <= MAX_JOINT_POINTS:
        axes = [np.linspace(lo, hi, resolution) for lo, hi in ranges]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    rng = rng or np.random.default_rng(0)
    return ranges[:, 0] + (ranges[:, 1] - ranges[:, 0]) * rng.random((MAX_JOINT_POINTS, d))


def verify_nonidentifiability(
    m1: MixtureRepresentation,
    m2: MixtureRepresentation,
    resolution: int = 200,
    tol: float = 1e-9,
    rng: Optional[np.random.Generator] = None,
) -> NonIdentifiabilityReport:
    """
    Compare two mixture representations on a grid.

    The marginal CDF of every dimension is compared on ``resolution`` points
    and the joint density on the full product grid while it stays small (low
    dimensional witnesses); larger grids are replaced by a seeded scatter of
    points in the same box.

    Returns:
        A report that passes only when both maximum differences are within
        tol and the two representations actually differ
    """
    if m1.d != m2.d:
        raise ShapeError(f"mixtures disagree on dimension: {m1.d} vs {m2.d}")
    ranges = _axis_ranges(m1, m2)

    max_cdf = 0.0
    for dim, (lo, hi) in enumerate(ranges):
        grid = np.linspace(lo, hi, resolution)
        diff = np.abs(
            distribution_ops.mixture_cdf_marginal(m1, dim, grid)
            - distribution_ops.mixture_cdf_marginal(m2, dim, grid)
        )
        max_cdf = max(max_cdf, float(diff.max()))

    points = _joint_points(ranges, resolution, rng)
    pdf_diff = np.abs(distribution_ops.mixture_pdf(m1, points) - distribution_ops.mixture_pdf(m2, points))
    max_pdf = float(pdf_diff.max())

    differ = not m1.same_representation(m2)
    passed = max_pdf <= tol and max_cdf <= tol and differ
    if not differ:
        logger.warning("Representations are identical; not a non-identifiability witness")
    logger.info(
        f"Non-identifiability grid check: max pdf diff {max_pdf:.3g}, max cdf diff {max_cdf:.3g}, "
        f"{'PASS' if passed else 'FAIL'}"
    )
    return NonIdentifiabilityReport(
        max_pdf_diff=max_pdf,
        max_cdf_diff=max_cdf,
        tol=tol,
        grid_resolution=resolution,
        representations_differ=differ,
        passed=passed,
    )
