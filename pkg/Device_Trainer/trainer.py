#!/usr/bin/env python3
"""
On-device training of a user's embedding distribution.

The classifier is frozen; only the distribution parameters move. Each step
estimates the gradient of the expected loss with the reparameterization
estimator (S noise draws per mini-batch), clips it to norm G, and takes a
plain SGD step of size eta from a shared initialization. In Gaussian mode
only the mean is trained, so every device's mean stays within eta * T * G of
the shared start.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from Embedding_Distribution import distribution_ops
from Embedding_Distribution.errors import ConfigError, NumericalError
from Embedding_Distribution.models.distribution_models import (
    BetaPerDim,
    DiagGaussian,
    EmbeddingDistribution,
    NoiseDraw,
    ParameterGradient,
    distribution_from_dict,
)
from Embedding_Distribution.utils.parameter_transforms import (
    beta_from_raw,
    beta_to_raw,
    softplus_derivative,
)
from Personalized_Model import classifier
from Personalized_Model.models.model_entities import DeviceDataset, FrozenModel, LabeledSample
from Cloud_Service.models.record_models import AnonymousRecord

logger = logging.getLogger(__name__)


class TrainerConfig(BaseModel):
    """Hyperparameters of on-device distribution training."""
    model_config = ConfigDict(extra="forbid")

    eta: float = Field(1e-3, gt=0.0, description="Learning rate")
    t_max: int = Field(100, ge=0, description="Maximum mini-batch steps")
    epochs: Optional[int] = Field(
        None, ge=0, description="If set, T = epochs * ceil(|train| / batch_size)"
    )
    clip_norm: float = Field(5.0, gt=0.0, description="Gradient clipping bound G")
    mc_samples: int = Field(8, ge=1, description="Noise draws per step")
    mode: Literal["gaussian", "beta"] = "gaussian"
    sigma: float = Field(0.2, ge=0.0, description="Fixed Gaussian standard deviation")
    beta_init: float = Field(2.0, gt=0.0, description="Shared alpha = beta start in Beta mode")
    shared_init: Optional[Dict[str, Any]] = Field(
        None, description="Explicit shared initialization; defaults per mode when absent"
    )
    batch_size: int = Field(32, ge=1)
    seed: int = 0

    def resolve_shared_init(self, d_u: int) -> EmbeddingDistribution:
        """
        The distribution every device starts from.

        Raises:
            ConfigError: If an explicit init disagrees with the mode, sigma or d_u
        """
        if self.shared_init is None:
            if self.mode == "gaussian":
                return DiagGaussian(mean=np.zeros(d_u), sigma=self.sigma)
            return BetaPerDim(alpha=np.full(d_u, self.beta_init), beta=np.full(d_u, self.beta_init))

        init = distribution_from_dict(self.shared_init)
        if init.kind != self.mode:
            raise ConfigError(f"shared_init is {init.kind} but trainer mode is {self.mode}")
        if isinstance(init, DiagGaussian) and init.sigma != self.sigma:
            raise ConfigError(f"shared_init sigma {init.sigma} != trainer sigma {self.sigma}")
        if init.d != d_u:
            raise ConfigError(f"shared_init has d={init.d} but the model expects d_u={d_u}")
        return init

    def steps_for(self, n_train: int) -> int:
        if self.epochs is not None:
            return self.epochs * int(np.ceil(n_train / self.batch_size))
        return self.t_max


@dataclass(eq=False)
class TrainedDistribution:
    """A device's distribution after local training. Never leaves the device."""
    local_user_id: int
    dist: EmbeddingDistribution
    iterations_used: int
    final_train_loss: float
    initial_train_loss: float
    skipped_coordinates: int = 0


def _stack_batch(batch: Union[Sequence[LabeledSample], Tuple[np.ndarray, np.ndarray]]):
    if isinstance(batch, tuple):
        X, y = batch
        return np.asarray(X, dtype=float), np.asarray(y, dtype=int)
    return np.stack([s.x for s in batch]), np.array([s.y for s in batch], dtype=int)


def _batch_upstream(model: FrozenModel, U: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """dl/du averaged over the batch, one row per noise draw."""
    S, B = U.shape[0], X.shape[0]
    grads = classifier.grad_embedding(
        model, np.repeat(U, B, axis=0), np.tile(X, (S, 1)), np.tile(y, S)
    )
    return grads.reshape(S, B, model.d_u).mean(axis=1)


def mc_objective(
    dist: EmbeddingDistribution, model: FrozenModel, X: np.ndarray, y: np.ndarray, noise: NoiseDraw
) -> float:
    """Monte Carlo estimate of E_u[mean batch loss] over the given noise rows."""
    U = np.atleast_2d(distribution_ops.reparam_sample(dist, noise))
    S, B = U.shape[0], X.shape[0]
    return classifier.mean_loss(model, np.repeat(U, B, axis=0), np.tile(X, (S, 1)), np.tile(y, S))


def mc_gradient(
    dist: EmbeddingDistribution, model: FrozenModel, X: np.ndarray, y: np.ndarray, noise: NoiseDraw
) -> Tuple[ParameterGradient, int]:
    """
    Reparameterization gradient for fixed noise rows.

    Returns:
        (gradient, number of skipped Beta coordinates)
    """
    if isinstance(dist, DiagGaussian):
        U = np.atleast_2d(distribution_ops.reparam_sample(dist, noise))
        upstream = _batch_upstream(model, U, X, y)
        return ParameterGradient(kind=dist.kind, values=upstream.mean(axis=0)), 0

    U, du_dalpha, du_dbeta, valid = distribution_ops.reparam_jacobian(dist, noise)
    U, du_dalpha, du_dbeta, valid = (np.atleast_2d(a) for a in (U, du_dalpha, du_dbeta, valid))
    upstream = _batch_upstream(model, U, X, y)
    skipped = int((~valid).sum())
    grad = np.concatenate(
        [(upstream * du_dalpha).mean(axis=0), (upstream * du_dbeta).mean(axis=0)]
    )
    return ParameterGradient(kind=dist.kind, values=grad), skipped


def estimate_obj_grad(
    dist: EmbeddingDistribution,
    model: FrozenModel,
    batch: Union[Sequence[LabeledSample], Tuple[np.ndarray, np.ndarray]],
    rng: np.random.Generator,
    mc_samples: int = 8,
) -> ParameterGradient:
    """
    Unbiased estimate of the gradient of the expected batch loss with respect
    to the distribution parameters, averaged over the batch and over
    ``mc_samples`` noise draws.

    Args:
        dist: Current distribution
        model: Frozen classifier
        batch: Labeled samples, or an (X, y) pair of arrays
        rng: Device random stream
        mc_samples: Noise draws S

    Raises:
        ConfigError: If the model is not frozen
    """
    if model.trainable:
        raise ConfigError("device-side gradients require a frozen model")
    X, y = _stack_batch(batch)
    noise = distribution_ops.draw_noise(dist, rng, mc_samples)
    grad, skipped = mc_gradient(dist, model, X, y, noise)
    if skipped:
        logger.warning(f"Skipped {skipped} near-boundary Beta coordinate(s) in gradient estimate")
    return grad


def clip(
    grad: Union[ParameterGradient, np.ndarray], G: float
) -> Union[ParameterGradient, np.ndarray]:
    """Rescale to l2 norm G when the norm exceeds G; direction is kept."""
    if G <= 0:
        raise ConfigError(f"clip bound must be positive, got {G}")
    values = grad.values if isinstance(grad, ParameterGradient) else np.asarray(grad, dtype=float)
    norm = float(np.linalg.norm(values))
    clipped = values if norm <= G else values * (G / norm)
    if isinstance(grad, ParameterGradient):
        return ParameterGradient(kind=grad.kind, values=clipped)
    return clipped


def train_device(
    dataset: DeviceDataset,
    model: FrozenModel,
    cfg: TrainerConfig,
    seed: Optional[int] = None,
) -> TrainedDistribution:
    """
    Train one device's distribution against the frozen model.

    Args:
        dataset: Local data (train split is used)
        model: Frozen downloaded model
        cfg: Trainer hyperparameters
        seed: Device seed; defaults to cfg.seed

    Returns:
        The trained distribution with loss before and after, both measured on
        the full train split with the same noise draws

    Raises:
        ConfigError: If the model is trainable or the init disagrees with the mode
    """
    if model.trainable:
        raise ConfigError("device training requires a frozen model")
    checksum = model.checksum()
    init = cfg.resolve_shared_init(model.d_u)
    rng = np.random.default_rng(cfg.seed if seed is None else seed)

    X, y = dataset.train_arrays()
    n = len(y)
    steps = cfg.steps_for(n) if n else 0
    eval_noise = distribution_ops.draw_noise(init, rng, cfg.mc_samples)
    initial_loss = mc_objective(init, model, X, y, eval_noise) if n else 0.0

    dist = init
    raw = beta_to_raw(init) if isinstance(init, BetaPerDim) else None
    skipped_total = 0
    order = rng.permutation(n) if n else np.zeros(0, dtype=int)
    cursor = 0

    for step in range(steps):
        if cursor >= n:
            order = rng.permutation(n)
            cursor = 0
        idx = order[cursor:cursor + cfg.batch_size]
        cursor += cfg.batch_size

        noise = distribution_ops.draw_noise(dist, rng, cfg.mc_samples)
        grad, skipped = mc_gradient(dist, model, X[idx], y[idx], noise)
        skipped_total += skipped

        if isinstance(dist, DiagGaussian):
            update = clip(grad.values, cfg.clip_norm)
            dist = DiagGaussian(mean=dist.mean - cfg.eta * update, sigma=dist.sigma)
        else:
            raw_grad = grad.values * softplus_derivative(raw)
            raw = raw - cfg.eta * clip(raw_grad, cfg.clip_norm)
            dist = beta_from_raw(raw)

    final_loss = mc_objective(dist, model, X, y, eval_noise) if n else 0.0

    if model.checksum() != checksum:
        raise NumericalError("frozen model weights changed during device training")
    if isinstance(dist, DiagGaussian):
        displacement = float(np.linalg.norm(dist.mean - init.mean))
        bound = cfg.eta * steps * cfg.clip_norm
        if displacement > bound * (1.0 + 1e-9) + 1e-12:
            raise NumericalError(
                f"mean moved {displacement:.6g}, beyond eta * T * G = {bound:.6g}"
            )
    if skipped_total:
        logger.warning(
            f"Device {dataset.local_user_id}: skipped {skipped_total} near-boundary Beta coordinate(s)"
        )

    logger.debug(
        f"Device {dataset.local_user_id}: {steps} steps, loss {initial_loss:.4f} -> {final_loss:.4f}"
    )
    return TrainedDistribution(
        local_user_id=dataset.local_user_id,
        dist=dist,
        iterations_used=steps,
        final_train_loss=final_loss,
        initial_train_loss=initial_loss,
        skipped_coordinates=skipped_total,
    )


def device_seeds(base_seed: int, n_devices: int) -> List[int]:
    """Independent per-device seeds spawned from one base seed."""
    children = np.random.SeedSequence(base_seed).spawn(n_devices)
    return [int(child.generate_state(1)[0]) for child in children]


def train_all_devices(
    datasets: Sequence[DeviceDataset],
    model: FrozenModel,
    cfg: TrainerConfig,
    seeds: Optional[Sequence[int]] = None,
    workers: int = 1,
) -> List[TrainedDistribution]:
    """
    Train every device independently, optionally on a thread pool. Results
    come back in dataset order whatever the completion order.
    """
    seeds = list(seeds) if seeds is not None else device_seeds(cfg.seed, len(datasets))
    if len(seeds) != len(datasets):
        raise ConfigError(f"{len(datasets)} devices but {len(seeds)} seeds")

    if workers <= 1:
        trained = [train_device(d, model, cfg, s) for d, s in zip(datasets, seeds)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            trained = list(executor.map(lambda pair: train_device(pair[0], model, cfg, pair[1]),
                                        zip(datasets, seeds)))
    logger.info(f"Trained {len(trained)} device distributions ({cfg.mode} mode)")
    return trained


def emit_uploads(
    trained: TrainedDistribution, dataset: DeviceDataset, rng: np.random.Generator
) -> List[AnonymousRecord]:
    """
    One anonymous record per training sample, each with a fresh embedding
    draw. Records carry no identifier.
    """
    X, y = dataset.train_arrays()
    if len(y) == 0:
        return []
    E = distribution_ops.sample(trained.dist, rng, size=len(y))
    return [AnonymousRecord.from_arrays(E[i], X[i], y[i]) for i in range(len(y))]


class EmbeddingSource:
    """
    Inference-time embeddings for one device: a fresh draw per query, or a
    pool pre-sampled offline and reused in rotation.

    Args:
        dist: The device's trained distribution
        policy: "fresh" or "cached"
        cache_size: Pool size for the cached policy
        rng: Stream used to fill the pool
    """

    def __init__(
        self,
        dist: EmbeddingDistribution,
        policy: str = "fresh",
        cache_size: int = 64,
        rng: Optional[np.random.Generator] = None,
    ):
        if policy not in ("fresh", "cached"):
            raise ConfigError(f"Unknown embedding policy: {policy!r}")
        self.dist = dist
        self.policy = policy
        self._pool: Optional[np.ndarray] = None
        self._cursor = 0
        if policy == "cached":
            if cache_size < 1:
                raise ConfigError("cache_size must be >= 1")
            self._pool = distribution_ops.sample(dist, rng or np.random.default_rng(), size=cache_size)

    def draw(self, count: int, rng: np.random.Generator) -> np.ndarray:
        if self._pool is None:
            return distribution_ops.sample(self.dist, rng, size=count)
        idx = (self._cursor + np.arange(count)) % len(self._pool)
        self._cursor = int((self._cursor + count) % len(self._pool))
        return self._pool[idx]

    __call__ = draw
