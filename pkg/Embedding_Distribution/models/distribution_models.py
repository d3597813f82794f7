from dataclasses import dataclass, field
from typing import Any, ClassVar, Dict, List, Union

import numpy as np

from ..errors import ConfigError, DomainError

# Tolerance on the sum of mixture weights
WEIGHT_SUM_TOL = 1e-12


def _as_vector(values: Any, name: str) -> np.ndarray:
    """Copy values into a read-only 1-D float array."""
    array = np.array(values, dtype=float).reshape(-1)
    if array.size < 1:
        raise DomainError(f"{name} must have at least one dimension")
    if not np.all(np.isfinite(array)):
        raise DomainError(f"{name} must be finite")
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class DiagGaussian:
    """
    Diagonal Gaussian embedding distribution with one standard deviation
    shared by every dimension. sigma = 0 is a degenerate point mass used for
    static embeddings.
    """
    mean: np.ndarray
    sigma: float
    kind: ClassVar[str] = "gaussian"

    def __post_init__(self):
        object.__setattr__(self, "mean", _as_vector(self.mean, "mean"))
        sigma = float(self.sigma)
        if not np.isfinite(sigma) or sigma < 0:
            raise DomainError(f"sigma must be >= 0, got {sigma}")
        object.__setattr__(self, "sigma", sigma)

    @property
    def d(self) -> int:
        return int(self.mean.size)

    def flat_parameters(self) -> np.ndarray:
        """Trainable parameters; sigma is fixed and not included."""
        return self.mean.copy()

    def with_flat_parameters(self, values: np.ndarray) -> "DiagGaussian":
        return DiagGaussian(mean=values, sigma=self.sigma)

    def same_parameters(self, other: "EmbeddingDistribution") -> bool:
        return (
            isinstance(other, DiagGaussian)
            and other.sigma == self.sigma
            and np.array_equal(other.mean, self.mean)
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "d": self.d,
            "mean": self.mean.tolist(),
            "sigma": self.sigma,
        }


@dataclass(frozen=True, eq=False)
class BetaPerDim:
    """Independent Beta(alpha_i, beta_i) marginal for every dimension."""
    alpha: np.ndarray
    beta: np.ndarray
    kind: ClassVar[str] = "beta"

    def __post_init__(self):
        alpha = _as_vector(self.alpha, "alpha")
        beta = _as_vector(self.beta, "beta")
        if alpha.shape != beta.shape:
            raise DomainError(
                f"alpha and beta lengths differ: {alpha.size} vs {beta.size}"
            )
        if np.any(alpha <= 0) or np.any(beta <= 0):
            raise DomainError("all Beta shape parameters must be > 0")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @property
    def d(self) -> int:
        return int(self.alpha.size)

    def flat_parameters(self) -> np.ndarray:
        """alpha followed by beta."""
        return np.concatenate([self.alpha, self.beta])

    def with_flat_parameters(self, values: np.ndarray) -> "BetaPerDim":
        values = np.asarray(values, dtype=float)
        return BetaPerDim(alpha=values[: self.d], beta=values[self.d :])

    def same_parameters(self, other: "EmbeddingDistribution") -> bool:
        return (
            isinstance(other, BetaPerDim)
            and np.array_equal(other.alpha, self.alpha)
            and np.array_equal(other.beta, self.beta)
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "d": self.d,
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
        }


EmbeddingDistribution = Union[DiagGaussian, BetaPerDim]


def distribution_from_dict(data: Dict[str, Any]) -> EmbeddingDistribution:
    """
    Rebuild a distribution from its structured-text form.

    Args:
        data: Dictionary produced by ``to_dict``

    Returns:
        The distribution
    """
    kind = data.get("kind")
    if kind == DiagGaussian.kind:
        dist = DiagGaussian(mean=data["mean"], sigma=data["sigma"])
    elif kind == BetaPerDim.kind:
        dist = BetaPerDim(alpha=data["alpha"], beta=data["beta"])
    else:
        raise ConfigError(f"Unknown distribution kind: {kind!r}")

    if "d" in data and int(data["d"]) != dist.d:
        raise ConfigError(f"Declared d={data['d']} but parameters have d={dist.d}")
    return dist


@dataclass(frozen=True, eq=False)
class NoiseDraw:
    """
    Base noise for the reparameterization map. Standard normal values for
    Gaussian mode, uniform values strictly inside (0, 1) for Beta mode.
    Rows index independent draws when values is 2-D.
    """
    values: np.ndarray
    kind: str

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim not in (1, 2):
            raise DomainError("noise must be a vector or a stack of vectors")
        if self.kind == BetaPerDim.kind and (np.any(values <= 0) or np.any(values >= 1)):
            raise DomainError("Beta-mode noise must lie strictly inside (0, 1)")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def d(self) -> int:
        return int(self.values.shape[-1])


@dataclass(frozen=True, eq=False)
class ParameterGradient:
    """
    Gradient with respect to a distribution's trainable parameters, laid out
    like ``flat_parameters`` (mean for Gaussian; alpha then beta for Beta).
    """
    kind: str
    values: np.ndarray

    @property
    def mean(self) -> np.ndarray:
        return self.values

    @property
    def alpha(self) -> np.ndarray:
        return self.values[: self.values.size // 2]

    @property
    def beta(self) -> np.ndarray:
        return self.values[self.values.size // 2 :]

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def scaled(self, factor: float) -> "ParameterGradient":
        return ParameterGradient(kind=self.kind, values=self.values * factor)


@dataclass(frozen=True)
class MixtureComponent:
    weight: float
    dist: EmbeddingDistribution


@dataclass(frozen=True)
class MixtureRepresentation:
    """
    A finite mixture written as an ordered list of weighted components. Two
    representations may describe the same density; that is the point.
    """
    components: List[MixtureComponent] = field(default_factory=list)

    def __post_init__(self):
        if not self.components:
            raise DomainError("a mixture needs at least one component")
        weights = np.array([c.weight for c in self.components], dtype=float)
        if np.any(weights < 0):
            raise DomainError("mixture weights must be non-negative")
        if abs(weights.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise DomainError(f"mixture weights sum to {weights.sum():.15f}, not 1")
        dims = {c.dist.d for c in self.components}
        if len(dims) != 1:
            raise DomainError(f"mixture components disagree on dimension: {sorted(dims)}")

    @property
    def d(self) -> int:
        return self.components[0].dist.d

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components], dtype=float)

    def __len__(self) -> int:
        return len(self.components)

    def same_representation(self, other: "MixtureRepresentation") -> bool:
        """True when both list identical weights and parameters in the same order."""
        if len(self) != len(other):
            return False
        return all(
            a.weight == b.weight and a.dist.same_parameters(b.dist)
            for a, b in zip(self.components, other.components)
        )

    @classmethod
    def uniform(cls, dists: List[EmbeddingDistribution]) -> "MixtureRepresentation":
        """Equal-weight mixture; the last weight absorbs rounding."""
        n = len(dists)
        weights = [1.0 / n] * n
        weights[-1] = 1.0 - sum(weights[:-1])
        return cls([MixtureComponent(w, d) for w, d in zip(weights, dists)])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "components": [
                {"weight": c.weight, "dist": c.dist.to_dict()} for c in self.components
            ]
        }
