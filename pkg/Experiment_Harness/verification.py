"""
One-shot verification suite.

Runs each invariant check as a named stage and aggregates the results; a
stage that raises counts as failed and keeps its error message. ``quick``
trades sample sizes for speed without changing what is checked.
"""

import logging
import os
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel
from scipy import special

from Anonymity_Analysis import (
    beta_decompose,
    chained_decompositions,
    check_closeness,
    closer_to_own_mean_probability,
    pairwise_gap_check,
    verify_nonidentifiability,
)
from Cloud_Service import create_transport
from Cloud_Service.utils.anonymity_checks import (
    audit_wire_payloads,
    positional_clustering_p_value,
    source_labels,
)
from Device_Trainer import (
    mc_gradient,
    mc_objective,
    train_all_devices,
    train_device,
)
from Embedding_Distribution import distribution_ops
from Embedding_Distribution.errors import ConfigError
from Embedding_Distribution.models.distribution_models import (
    BetaPerDim,
    DiagGaussian,
    MixtureComponent,
    MixtureRepresentation,
)
from Personalized_Model import FrozenModel, classifier

from .config import ExperimentConfig
from .protocol import emit_all_uploads, prepare_bootstrap, run_attack, send_sessions, train_population
from .reports import write_json

logger = logging.getLogger(__name__)

GRADIENT_RTOL = 1e-5
REPARAM_RTOL = 1e-3
STANDARD_ERRORS = 3.0
CLOSENESS_TOL = 0.005
CLOSED_FORM_REFERENCE = (0.1, 0.2, 0.598706)
GRID_TOL = 1e-9
MOMENT_TOL = 1e-9
MIN_SHUFFLE_P_VALUE = 0.01


class StageResult(BaseModel):
    name: str
    passed: bool
    details: Dict[str, Any] = {}
    error: Optional[str] = None


class VerificationReport(BaseModel):
    passed: bool
    quick: bool
    stages: List[StageResult]

    def failed_stages(self) -> List[str]:
        return [s.name for s in self.stages if not s.passed]


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-6)
    return float(np.linalg.norm(np.asarray(analytic) - np.asarray(numeric)) / scale)


def _central_difference(f: Callable[[np.ndarray], float], point: np.ndarray, h: float) -> np.ndarray:
    grad = np.zeros_like(point)
    for i in range(point.size):
        step = np.zeros_like(point)
        step.flat[i] = h
        grad.flat[i] = (f(point + step) - f(point - step)) / (2.0 * h)
    return grad


def check_model_gradients(rng: np.random.Generator, n_instances: int = 100, h: float = 1e-6) -> Dict[str, Any]:
    """grad_embedding and grad_model against central differences on random small models."""
    worst_embedding = 0.0
    worst_model = 0.0
    for _ in range(n_instances):
        d_u, d_x = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        d_h, C = int(rng.integers(2, 7)), int(rng.integers(2, 5))
        model = FrozenModel.init_random(d_u, d_x, d_h, C, rng, init_scale=1.5)
        u, x, y = rng.standard_normal(d_u), rng.standard_normal(d_x), int(rng.integers(C))

        numeric = _central_difference(lambda v: classifier.mean_loss(model, v, x, y), u, h)
        worst_embedding = max(worst_embedding, _relative_error(classifier.grad_embedding(model, u, x, y), numeric))

        analytic = classifier.grad_model(model, u, x, y)
        for name in ("W1", "b1", "W2", "b2"):
            def loss_at(values, name=name):
                perturbed = model.thaw()
                getattr(perturbed, name)[...] = values
                return classifier.mean_loss(perturbed, u, x, y)

            numeric = _central_difference(loss_at, getattr(model, name).copy(), h)
            worst_model = max(worst_model, _relative_error(getattr(analytic, name), numeric))

    return {
        "instances": n_instances,
        "max_rel_error_embedding": worst_embedding,
        "max_rel_error_model": worst_model,
        "passed": worst_embedding < GRADIENT_RTOL and worst_model < GRADIENT_RTOL,
    }


def check_reparam_gradient(rng: np.random.Generator, mc_samples: int = 10_000, h: float = 1e-5) -> Dict[str, Any]:
    """
    Gaussian pathwise mean-gradient against a finite difference of the Monte
    Carlo objective evaluated with the same noise on both sides.
    """
    model = FrozenModel.init_random(3, 4, 8, 3, rng, init_scale=1.5)
    X = rng.standard_normal((16, 4))
    y = rng.integers(3, size=16)
    dist = DiagGaussian(mean=rng.normal(0.0, 0.3, 3), sigma=0.2)
    noise = distribution_ops.draw_noise(dist, rng, mc_samples)

    grad, _ = mc_gradient(dist, model, X, y, noise)
    numeric = _central_difference(
        lambda mean: mc_objective(DiagGaussian(mean=mean, sigma=dist.sigma), model, X, y, noise),
        dist.mean.copy(),
        h,
    )
    error = _relative_error(grad.values, numeric)
    return {"mc_samples": mc_samples, "rel_error": error, "passed": error < REPARAM_RTOL}


def check_beta_gradient(rng: np.random.Generator, n_triples: int = 10, n_draws: int = 100_000) -> Dict[str, Any]:
    """
    Implicit reparameterization gradient against the score-function
    estimator for f(u) = c1 * u + c2 * u^2 under random one-dimensional Betas.
    """
    worst_z = 0.0
    failures = 0
    for _ in range(n_triples):
        a, b = rng.uniform(0.8, 5.0, size=2)
        c1, c2 = rng.standard_normal(2)
        dist = BetaPerDim(alpha=[a], beta=[b])
        noise = distribution_ops.draw_noise(dist, rng, n_draws)
        u, du_da, du_db, valid = distribution_ops.reparam_jacobian(dist, noise)
        keep = valid[:, 0]
        u = u[keep, 0]
        f = c1 * u + c2 * u ** 2
        f_prime = c1 + 2.0 * c2 * u

        total = special.digamma(a + b)
        score_alpha = f * (np.log(u) - special.digamma(a) + total)
        score_beta = f * (np.log1p(-u) - special.digamma(b) + total)
        score_means = distribution_ops.score_function_grad(dist, u[:, None], f).values

        for pathwise, score, score_mean in (
            (f_prime * du_da[keep, 0], score_alpha, score_means[0]),
            (f_prime * du_db[keep, 0], score_beta, score_means[1]),
        ):
            n = len(pathwise)
            se = np.sqrt(pathwise.var(ddof=1) / n + score.var(ddof=1) / n)
            z = abs(pathwise.mean() - score_mean) / se
            worst_z = max(worst_z, float(z))
            failures += int(z > STANDARD_ERRORS)

    return {
        "triples": n_triples,
        "draws": n_draws,
        "max_standard_errors": worst_z,
        "failures": failures,
        "passed": failures == 0,
    }


def stage_gradients(cfg: ExperimentConfig, rng: np.random.Generator, quick: bool) -> Tuple[bool, Dict[str, Any]]:
    model = check_model_gradients(rng, n_instances=20 if quick else 100)
    reparam = check_reparam_gradient(rng, mc_samples=2000 if quick else 10_000)
    return model["passed"] and reparam["passed"], {"model": model, "reparam": reparam}


def stage_beta_gradient(cfg: ExperimentConfig, rng: np.random.Generator, quick: bool) -> Tuple[bool, Dict[str, Any]]:
    details = check_beta_gradient(rng, n_draws=20_000 if quick else 100_000)
    return details["passed"], details


def stage_closeness(cfg: ExperimentConfig, rng: np.random.Generator, quick: bool) -> Tuple[bool, Dict[str, Any]]:
    """Closed-form closeness probability against Monte Carlo, in several dimensions."""
    n_draws = 250_000 if quick else 1_000_000
    distance, sigma, expected = CLOSED_FORM_REFERENCE
    reference_ok = abs(closer_to_own_mean_probability(distance, sigma) - expected) <= 1e-6

    triples = [(distance, sigma, d) for d in (1, 8, 64)]
    for _ in range(9):
        triples.append((float(rng.uniform(0.0, 1.0)), float(rng.uniform(0.05, 0.5)), int(rng.choice([1, 8, 64]))))
    checks = [check_closeness(dist, s, d, n_draws, rng, CLOSENESS_TOL) for dist, s, d in triples]
    return reference_ok and all(c.passed for c in checks), {
        "reference_ok": reference_ok,
        "max_abs_error": max(c.abs_error for c in checks),
        "checks": [c.model_dump() for c in checks],
    }


def _gaussian_config(cfg: ExperimentConfig, quick: bool) -> ExperimentConfig:
    updates: Dict[str, Any] = {}
    if cfg.trainer.mode != "gaussian":
        updates["trainer"] = {"mode": "gaussian", "shared_init": None}
    if quick:
        updates["task"] = {"per_user": 40}
        updates["attack"] = {"M": min(cfg.attack.M, 300)}
        updates["cloud"] = {"bootstrap_epochs": min(cfg.cloud.bootstrap_epochs, 3)}
    return cfg.with_updates(**updates) if updates else cfg


def stage_misattribution(cfg: ExperimentConfig, rng: np.random.Generator, quick: bool) -> Tuple[bool, Dict[str, Any]]:
    """Lower bound soundness and the pairwise mean gap on a trained Gaussian population."""
    gcfg = _gaussian_config(cfg, quick)
    task, _, trained = train_population(gcfg)
    T = max(t.iterations_used for t in trained)
    gap = pairwise_gap_check([t.dist for t in trained], gcfg.trainer.eta, T, gcfg.trainer.clip_norm)
    attack = run_attack(gcfg, task, trained)

    sound = attack.theoretical_bound is None or (
        attack.empirical_misattribution >= attack.theoretical_bound - gcfg.attack.bound_slack
    )
    nonzero_ok = not gcfg.attack.assert_misattribution or attack.empirical_misattribution > 0.0
    details = {
        "misattribution": attack.empirical_misattribution,
        "bound": attack.theoretical_bound,
        "slack": gcfg.attack.bound_slack,
        "bound_sound": sound,
        "gap": gap.model_dump(),
        "nonzero_required": gcfg.attack.assert_misattribution,
        "nonzero_ok": nonzero_ok,
    }
    return sound and gap.passed and nonzero_ok, details


def stage_device_training(cfg: ExperimentConfig, rng: np.random.Generator, quick: bool) -> Tuple[bool, Dict[str, Any]]:
    """Determinism, zero-step identity, frozen checksum and the displacement bound."""
    small = cfg.with_updates(
        task={"N": 3, "per_user": 40},
        cloud={"bootstrap_epochs": 1},
        trainer={"t_max": 20 if quick else 50, "epochs": None},
        entropy={"enabled": False},
    )
    task, bootstrap = prepare_bootstrap(small)
    device = task.devices[0]
    checksum = bootstrap.checksum()

    first = train_device(device, bootstrap, small.trainer, seed=11)
    second = train_device(device, bootstrap, small.trainer, seed=11)
    deterministic = first.dist.same_parameters(second.dist)

    zero_cfg = small.trainer.model_copy(update={"t_max": 0})
    untouched = train_device(device, bootstrap, zero_cfg, seed=11)
    init = small.trainer.resolve_shared_init(bootstrap.d_u)
    zero_ok = untouched.dist.same_parameters(init)

    displacement_ok = True
    if isinstance(first.dist, DiagGaussian):
        bound = small.trainer.eta * first.iterations_used * small.trainer.clip_norm
        displacement_ok = float(np.linalg.norm(first.dist.mean - init.mean)) <= bound * (1 + 1e-9)

    details = {
        "deterministic": deterministic,
        "zero_steps_identity": zero_ok,
        "checksum_unchanged": bootstrap.checksum() == checksum,
        "displacement_within_bound": displacement_ok,
    }
    return all(details.values()), details


def stage_nonidentifiability(cfg: ExperimentConfig, rng: np.random.Generator, quick: bool) -> Tuple[bool, Dict[str, Any]]:
    """Beta decomposition witnesses on a 3-component 2-D mixture, plus negative controls."""
    resolution = 60 if quick else 200
    mix = MixtureRepresentation.uniform(
        [BetaPerDim(alpha=rng.uniform(0.8, 5.0, 2), beta=rng.uniform(0.8, 5.0, 2)) for _ in range(3)]
    )
    witnesses = [beta_decompose(mix, 0, 0)] + chained_decompositions(mix, 5, rng)
    reports = [verify_nonidentifiability(mix, w, resolution, GRID_TOL) for w in witnesses]

    mean, var = distribution_ops.mixture_moments(mix)
    moments_ok = all(
        np.allclose(distribution_ops.mixture_moments(w)[0], mean, rtol=0, atol=MOMENT_TOL)
        and np.allclose(distribution_ops.mixture_moments(w)[1], var, rtol=0, atol=MOMENT_TOL)
        for w in witnesses
    )

    shifted = [MixtureComponent(c.weight + delta, c.dist) for c, delta in zip(mix.components, (1e-3, -1e-3, 0.0))]
    perturbed = verify_nonidentifiability(mix, MixtureRepresentation(shifted), resolution, GRID_TOL)
    identical = verify_nonidentifiability(mix, mix, resolution, GRID_TOL)

    details = {
        "witnesses": len(witnesses),
        "max_diff": max(r.max_diff for r in reports),
        "all_witnesses_pass": all(r.passed for r in reports),
        "moments_preserved": moments_ok,
        "perturbed_rejected": not perturbed.passed,
        "identical_flagged": not identical.passed and not identical.representations_differ,
    }
    passed = (
        details["all_witnesses_pass"]
        and moments_ok
        and details["perturbed_rejected"]
        and details["identical_flagged"]
    )
    return passed, details


def stage_wire_anonymity(cfg: ExperimentConfig, rng: np.random.Generator, quick: bool) -> Tuple[bool, Dict[str, Any]]:
    """Key-set scan, order randomness and transport independence of the collected dataset."""
    small = cfg.with_updates(
        task={"N": min(cfg.task.N, 8), "per_user": 40},
        cloud={"bootstrap_epochs": 1},
        trainer={"t_max": 10, "epochs": None},
        entropy={"enabled": False},
    )
    task, bootstrap = prepare_bootstrap(small)
    trained = train_all_devices(task.devices, bootstrap, small.trainer)
    sessions = emit_all_uploads(small, task, trained)

    datasets = {}
    audits = {}
    for spec, workers in (("inprocess", 1), ("socket", 4)):
        with create_transport(spec, capture=True) as transport:
            send_sessions(transport, sessions, workers)
            datasets[spec] = transport.build_dataset(small.seeds.shuffle)
            audits[spec] = audit_wire_payloads(transport.captured_sessions)

    identical = [r.to_wire_line() for r in datasets["inprocess"]] == [r.to_wire_line() for r in datasets["socket"]]
    labels = source_labels(datasets["inprocess"], sessions)
    p_value = positional_clustering_p_value(labels, n_permutations=199 if quick else 999, rng=rng)
    details = {
        "records": len(datasets["inprocess"]),
        "audit": {spec: audit.model_dump() for spec, audit in audits.items()},
        "transports_identical": identical,
        "shuffle_p_value": p_value,
    }
    passed = all(a.passed for a in audits.values()) and identical and p_value > MIN_SHUFFLE_P_VALUE
    return passed, details


STAGES: List[Tuple[str, Callable]] = [
    ("gradients", stage_gradients),
    ("beta_gradient", stage_beta_gradient),
    ("closeness", stage_closeness),
    ("misattribution", stage_misattribution),
    ("device_training", stage_device_training),
    ("nonidentifiability", stage_nonidentifiability),
    ("wire_anonymity", stage_wire_anonymity),
]


def verify_all(
    cfg: ExperimentConfig,
    quick: bool = False,
    out_dir: Optional[str] = None,
    only: Optional[List[str]] = None,
) -> VerificationReport:
    """
    Run every verification stage (or the named subset) and aggregate.

    Args:
        cfg: Experiment configuration the checks are run against
        quick: Smaller sample sizes
        out_dir: If given, verification.json is written there
        only: Stage names to run; all when None
    """
    known = [name for name, _ in STAGES]
    unknown = sorted(set(only or []) - set(known))
    if unknown:
        raise ConfigError(f"Unknown verification stage(s): {', '.join(unknown)}; choose from {', '.join(known)}")

    results = []
    for index, (name, check) in enumerate(STAGES):
        if only is not None and name not in only:
            continue
        rng = np.random.default_rng([cfg.seeds.attack, index])
        logger.info(f"Verification stage: {name}")
        try:
            passed, details = check(cfg, rng, quick)
            results.append(StageResult(name=name, passed=bool(passed), details=details))
        except Exception as e:
            logger.error(f"Verification stage '{name}' raised: {e}")
            results.append(StageResult(name=name, passed=False, error=f"{type(e).__name__}: {e}"))
        logger.info(f"Verification stage {name}: {'PASS' if results[-1].passed else 'FAIL'}")

    report = VerificationReport(passed=all(r.passed for r in results), quick=quick, stages=results)
    if out_dir:
        write_json(os.path.join(out_dir, "verification.json"), report)
    if not report.passed:
        logger.error(f"Verification failed at: {', '.join(report.failed_stages())}")
    return report
