#!/usr/bin/env python3
"""
End-to-end protocol runner and baselines.

One run: generate the synthetic users, bootstrap the cloud model with zero
embeddings, let every device train its embedding distribution against the
frozen model, upload anonymous records through a transport, collect and
shuffle them, fine-tune, then evaluate accuracy and run the attribution
attack. Each stage failure is re-raised as a StageError naming the stage.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from Anonymity_Analysis import (
    AttackReport,
    EntropyBucketReport,
    GapReport,
    NonIdentifiabilityReport,
    beta_decompose,
    beta_witness,
    dataset_size_prior,
    misattribution_mc,
    pairwise_gap_check,
    uniform_prior,
    user_entropy_analysis,
    verify_nonidentifiability,
)
from Cloud_Service import (
    CloudDataset,
    EvaluationReport,
    bootstrap_train,
    create_transport,
    evaluate,
    evaluate_fixed_embedding,
    finetune,
)
from Cloud_Service.utils.anonymity_checks import (
    audit_wire_payloads,
    positional_clustering_p_value,
    source_labels,
)
from Device_Trainer import (
    EmbeddingSource,
    TrainedDistribution,
    device_seeds,
    emit_uploads,
    train_all_devices,
)
from Embedding_Distribution.errors import NumericalError, StageError, VerificationError
from Personalized_Model import (
    FrozenModel,
    SyntheticTask,
    generate_synthetic,
    oracle_accuracy,
    pooled_samples,
)

from .config import ExperimentConfig
from .reports import write_csv, write_json

logger = logging.getLogger(__name__)


@contextmanager
def stage(name: str):
    """Run a protocol stage, re-raising any failure as a StageError."""
    logger.info(f"Stage: {name}")
    try:
        yield
    except StageError:
        raise
    except Exception as e:
        logger.error(f"Stage '{name}' failed: {e}")
        raise StageError(name, e) from e


def round_seed(base: int, round_index: int) -> int:
    return int(np.random.SeedSequence([base, round_index]).generate_state(1)[0])


@dataclass(eq=False)
class ProtocolResult:
    """Everything a run produced; ``metrics`` is what lands in metrics.json."""
    config: ExperimentConfig
    task: SyntheticTask
    bootstrap_model: FrozenModel
    final_model: FrozenModel
    trained: List[TrainedDistribution]
    dataset: CloudDataset
    evaluation: EvaluationReport
    attack: AttackReport
    gap: Optional[GapReport] = None
    entropy: Optional[EntropyBucketReport] = None
    nonidentifiability: Optional[NonIdentifiabilityReport] = None
    wire_sessions: List[bytes] = field(default_factory=list)
    metrics: Dict[str, Any] = field(default_factory=dict)

    @property
    def dists(self):
        return [t.dist for t in self.trained]


def initial_model(cfg: ExperimentConfig) -> FrozenModel:
    return FrozenModel.init_random(
        d_u=cfg.model.d_u,
        d_x=cfg.task.d_x,
        d_h=cfg.model.d_h,
        n_classes=cfg.task.C,
        rng=np.random.default_rng(cfg.model.seed),
        init_scale=cfg.model.init_scale,
        embedding_scale=cfg.model.embedding_init_scale,
    )


def prepare_bootstrap(cfg: ExperimentConfig, task: Optional[SyntheticTask] = None):
    """Generate the task (unless given) and the bootstrap model trained with zero embeddings."""
    with stage("generate"):
        task = task or generate_synthetic(cfg.task)
    with stage("bootstrap"):
        cloud = bootstrap_train(
            initial_model(cfg),
            pooled_samples(task),
            epochs=cfg.cloud.bootstrap_epochs,
            lr=cfg.cloud.lr,
            batch_size=cfg.cloud.batch_size,
            seed=cfg.seeds.cloud,
            lr_schedule=cfg.cloud.lr_schedule,
        )
    return task, cloud.freeze()


def train_population(cfg: ExperimentConfig):
    """Bootstrap, then train one distribution per device against the bootstrap model."""
    task, bootstrap = prepare_bootstrap(cfg)
    with stage("train_devices"):
        trained = train_all_devices(
            task.devices,
            bootstrap,
            cfg.trainer,
            seeds=device_seeds(round_seed(cfg.seeds.devices, 0), len(task.devices)),
            workers=cfg.workers,
        )
    return task, bootstrap, trained


def emit_all_uploads(cfg: ExperimentConfig, task: SyntheticTask, trained, round_index: int = 0):
    """One session of anonymous records per device, each device on its own stream."""
    return [
        emit_uploads(t, device, np.random.default_rng([cfg.seeds.uploads, round_index, index]))
        for index, (t, device) in enumerate(zip(trained, task.devices))
    ]


def send_sessions(transport, sessions, workers: int = 1) -> None:
    """Deliver every session, concurrently when workers > 1."""
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            accepted = list(executor.map(transport.send_session, sessions))
    else:
        accepted = [transport.send_session(s) for s in sessions]
    if accepted != [len(s) for s in sessions]:
        raise NumericalError(f"transport accepted {sum(accepted)} of {sum(map(len, sessions))} records")


def _upload_round(cfg: ExperimentConfig, task: SyntheticTask, trained, round_index: int):
    """Emit, transport and collect one round of uploads."""
    with stage("upload"):
        sessions = emit_all_uploads(cfg, task, trained, round_index)
        with create_transport(cfg.transport, capture=True) as transport:
            send_sessions(transport, sessions, cfg.workers)
            with stage("collect"):
                dataset = transport.build_dataset(round_seed(cfg.seeds.shuffle, round_index))
            payloads = list(transport.captured_sessions)
    return sessions, dataset, payloads


def _wire_metrics(cfg: ExperimentConfig, sessions, dataset: CloudDataset, payloads) -> Dict[str, Any]:
    audit = audit_wire_payloads(payloads)
    labels = source_labels(dataset, sessions)
    p_value = positional_clustering_p_value(labels, rng=np.random.default_rng(cfg.seeds.shuffle))
    return {"audit": audit.model_dump(), "shuffle_p_value": p_value}


def _attack_prior(cfg: ExperimentConfig, task: SyntheticTask) -> np.ndarray:
    if cfg.attack.prior == "dataset_size":
        return dataset_size_prior([len(d.train) for d in task.devices])
    return uniform_prior(len(task.devices))


def run_attack(cfg: ExperimentConfig, task: SyntheticTask, trained: List[TrainedDistribution]) -> AttackReport:
    """Attribution attack against the trained distributions of one run."""
    T = max((t.iterations_used for t in trained), default=0)
    gaussian = cfg.trainer.mode == "gaussian"
    return misattribution_mc(
        [t.dist for t in trained],
        prior=_attack_prior(cfg, task),
        M=cfg.attack.M,
        rng=np.random.default_rng(cfg.seeds.attack),
        eta=cfg.trainer.eta if gaussian else None,
        T=T if gaussian else None,
        G=cfg.trainer.clip_norm if gaussian else None,
        attacker=cfg.attack.attacker,
        prior_mode=cfg.attack.prior,
        workers=cfg.workers,
    )


def run_protocol(
    cfg: ExperimentConfig,
    out_dir: Optional[str] = None,
    include_on_device: bool = False,
) -> ProtocolResult:
    """
    Run the full protocol once.

    Args:
        cfg: Validated experiment configuration
        out_dir: If given, every report is written there
        include_on_device: Also run the on-device fine-tune baseline and
            report the lift over it

    Returns:
        ProtocolResult with reports and the metrics record

    Raises:
        StageError: Naming the stage that failed
    """
    task, bootstrap = prepare_bootstrap(cfg)
    with stage("baseline_no_id"):
        no_id = evaluate_fixed_embedding(bootstrap, task.devices)

    served = bootstrap
    wire: Dict[str, Any] = {}
    gap = None
    for round_index in range(cfg.rounds):
        with stage("train_devices"):
            trained = train_all_devices(
                task.devices,
                served,
                cfg.trainer,
                seeds=device_seeds(round_seed(cfg.seeds.devices, round_index), len(task.devices)),
                workers=cfg.workers,
            )
            if cfg.trainer.mode == "gaussian":
                T = max(t.iterations_used for t in trained)
                gap = pairwise_gap_check([t.dist for t in trained], cfg.trainer.eta, T, cfg.trainer.clip_norm)
                if not gap.passed:
                    raise NumericalError(f"pairwise mean gap {gap.max_gap:.6g} exceeds {gap.bound:.6g}")

        sessions, dataset, payloads = _upload_round(cfg, task, trained, round_index)
        wire = _wire_metrics(cfg, sessions, dataset, payloads)

        with stage("finetune"):
            start = served if cfg.cloud.finetune_from == "bootstrap" else initial_model(cfg)
            served = finetune(
                start,
                dataset,
                epochs=cfg.cloud.finetune_epochs,
                lr=cfg.cloud.lr,
                batch_size=cfg.cloud.batch_size,
                seed=round_seed(cfg.seeds.cloud, round_index + 1),
                lr_schedule=cfg.cloud.lr_schedule,
            ).freeze()
        logger.info(f"Round {round_index + 1}/{cfg.rounds} complete: {len(dataset)} records")

    dists = [t.dist for t in trained]
    with stage("evaluate"):
        drawers = None
        if cfg.inference.embedding_policy == "cached":
            drawers = [
                EmbeddingSource(
                    d, "cached", cfg.inference.cache_size, np.random.default_rng([cfg.seeds.evaluation, n])
                )
                for n, d in enumerate(dists)
            ]
        evaluation = evaluate(served, task.devices, dists, np.random.default_rng(cfg.seeds.evaluation), drawers)

    with stage("attack"):
        attack = run_attack(cfg, task, trained)
        if cfg.attack.assert_misattribution and attack.empirical_misattribution == 0.0:
            raise VerificationError("misattribution is zero: uploaded embeddings identify their devices")

    entropy = None
    if cfg.entropy.enabled:
        with stage("entropy"):
            entropy = user_entropy_analysis(
                served,
                dists,
                task.devices,
                K=cfg.entropy.K,
                bucket_edges=cfg.entropy.bucket_edges,
                rng=np.random.default_rng(cfg.seeds.entropy),
                baseline_model=bootstrap,
            )

    witness = None
    if cfg.trainer.mode == "beta":
        with stage("nonidentifiability"):
            mix = beta_witness(dists)
            witness = verify_nonidentifiability(mix, beta_decompose(mix, 0, 0))

    on_device = None
    if include_on_device:
        with stage("baseline_on_device"):
            on_device = baseline_on_device(cfg, task=task, bootstrap=bootstrap)

    metrics = _metrics_record(cfg, task, no_id, evaluation, attack, gap, entropy, witness, wire, trained, on_device)
    result = ProtocolResult(
        config=cfg,
        task=task,
        bootstrap_model=bootstrap,
        final_model=served,
        trained=trained,
        dataset=dataset,
        evaluation=evaluation,
        attack=attack,
        gap=gap,
        entropy=entropy,
        nonidentifiability=witness,
        wire_sessions=payloads,
        metrics=metrics,
    )
    if out_dir:
        with stage("write"):
            write_run_outputs(result, out_dir)
    logger.info(
        f"Personalized accuracy {evaluation.accuracy:.4f} vs no-ID {no_id.accuracy:.4f}; "
        f"misattribution {attack.empirical_misattribution:.4f}"
    )
    return result


def _metrics_record(cfg, task, no_id, evaluation, attack, gap, entropy, witness, wire, trained, on_device):
    bound = attack.theoretical_bound
    metrics: Dict[str, Any] = {
        "n_users": len(task.devices),
        "mode": cfg.trainer.mode,
        "sigma": cfg.trainer.sigma if cfg.trainer.mode == "gaussian" else None,
        "rounds": cfg.rounds,
        "transport": cfg.transport.split(":")[0],
        "accuracy_personalized": evaluation.accuracy,
        "accuracy_bootstrap": no_id.accuracy,
        "lift_vs_no_id": evaluation.accuracy - no_id.accuracy,
        "oracle_accuracy_with_bias": oracle_accuracy(task, use_bias=True),
        "oracle_accuracy_without_bias": oracle_accuracy(task, use_bias=False),
        "misattribution": attack.empirical_misattribution,
        "misattribution_bound": bound,
        "bound_sound": None if bound is None else attack.empirical_misattribution >= bound - cfg.attack.bound_slack,
        "mean_initial_train_loss": float(np.mean([t.initial_train_loss for t in trained])),
        "mean_final_train_loss": float(np.mean([t.final_train_loss for t in trained])),
        "iterations_used": max((t.iterations_used for t in trained), default=0),
        "pairwise_gap": gap.model_dump() if gap is not None else None,
        "wire": wire,
        "nonidentifiability": witness.model_dump() if witness is not None else None,
    }
    if entropy is not None:
        metrics["entropy"] = {
            "per_bucket_count": entropy.per_bucket_count,
            "lifts": entropy.lifts(),
        }
    if on_device is not None:
        accuracy_on_device = float(np.mean(on_device))
        metrics["accuracy_on_device"] = accuracy_on_device
        metrics["lift_vs_on_device"] = evaluation.accuracy - accuracy_on_device
    return metrics


def write_run_outputs(result: ProtocolResult, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    write_json(os.path.join(out_dir, "metrics.json"), result.metrics)
    write_json(os.path.join(out_dir, "attack_report.json"), result.attack)
    write_csv(
        os.path.join(out_dir, "attack_per_user.csv"),
        ["user", "misattribution"],
        enumerate(result.attack.per_user_rates),
    )
    write_csv(
        os.path.join(out_dir, "per_user_accuracy.csv"),
        ["user", "accuracy"],
        enumerate(result.evaluation.per_user_accuracy),
    )
    if result.entropy is not None:
        edges = result.entropy.bucket_edges
        write_csv(
            os.path.join(out_dir, "entropy_buckets.csv"),
            ["bucket_lo", "bucket_hi", "count", "accuracy"],
            [
                (edges[i], edges[i + 1], count, accuracy)
                for i, (count, accuracy) in enumerate(
                    zip(result.entropy.per_bucket_count, result.entropy.per_bucket_accuracy)
                )
            ],
        )
    if result.config.cloud.write_records:
        result.dataset.write_record_file(os.path.join(out_dir, "cloud_records.jsonl"))
    logger.info(f"Wrote run outputs to {out_dir}")


def baseline_no_id(cfg: ExperimentConfig) -> float:
    """Accuracy of the bootstrap model served with zero embeddings."""
    task, bootstrap = prepare_bootstrap(cfg)
    return evaluate_fixed_embedding(bootstrap, task.devices).accuracy


def baseline_on_device(
    cfg: ExperimentConfig,
    task: Optional[SyntheticTask] = None,
    bootstrap: Optional[FrozenModel] = None,
) -> List[float]:
    """
    Every user copies the bootstrap model and fine-tunes all of its weights
    on local data only, then is scored on the local test split.

    Returns:
        Per-user test accuracies in device order
    """
    if task is None or bootstrap is None:
        task, bootstrap = prepare_bootstrap(cfg, task)
    seeds = device_seeds(cfg.seeds.cloud, len(task.devices))
    accuracies = []
    for device, seed in zip(task.devices, seeds):
        local = bootstrap_train(
            bootstrap,
            device.train,
            epochs=cfg.cloud.on_device_epochs,
            lr=cfg.cloud.on_device_lr,
            batch_size=cfg.trainer.batch_size,
            seed=seed,
        )
        accuracies.append(evaluate_fixed_embedding(local, [device]).per_user_accuracy[0])
    logger.info(f"On-device baseline: mean accuracy {np.mean(accuracies):.4f}")
    return accuracies


def baseline_static_embedding(cfg: ExperimentConfig, out_dir: Optional[str] = None) -> ProtocolResult:
    """
    The trivial learned-embedding method: every device trains a fixed
    embedding, i.e. the Gaussian path with sigma = 0.
    """
    shared_init = cfg.trainer.shared_init
    if shared_init is not None and shared_init.get("kind") == "gaussian":
        shared_init = {**shared_init, "sigma": 0.0}
    else:
        shared_init = None
    static = cfg.with_updates(trainer={"mode": "gaussian", "sigma": 0.0, "shared_init": shared_init})
    return run_protocol(static, out_dir=out_dir)
