#!/usr/bin/env python3
"""
Command-line entry point for the anonymous embedding lab.

Runs the upload protocol end to end, its baselines, the variance sweep, the
embedding projection export and the verification suite.
"""

import argparse
import logging
import os
import sys
from typing import List, Optional

import numpy as np
from pydantic import ValidationError

from Anonymity_Analysis import misattribution_lower_bound
from Embedding_Distribution.errors import ConfigError, EmbeddingLabError, StageError
from Experiment_Harness.config import Configuration, ExperimentConfig
from Experiment_Harness.projection import export_embedding_projection
from Experiment_Harness.protocol import (
    baseline_no_id,
    baseline_on_device,
    baseline_static_embedding,
    run_attack,
    run_protocol,
    train_population,
)
from Experiment_Harness.reports import write_csv, write_json
from Experiment_Harness.sweep import sweep_variance
from Experiment_Harness.verification import verify_all

EXIT_OK = 0
EXIT_STAGE_FAILURE = 1
EXIT_CONFIG_ERROR = 2
EXIT_VERIFICATION_FAILED = 3


def setup_logging(out_dir: str, verbose: bool = False):
    """Log to <out>/experiment.log and stdout."""
    os.makedirs(out_dir, exist_ok=True)
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(os.path.join(out_dir, 'experiment.log')),
            logging.StreamHandler(sys.stdout)
        ],
        force=True
    )


def load_config(args) -> ExperimentConfig:
    """Configuration file plus command-line overrides."""
    cfg = Configuration(args.config).experiment()
    if args.seed is not None:
        cfg = cfg.reseeded(args.seed)
    if args.transport is not None:
        cfg = cfg.with_updates(transport=args.transport)
    return cfg


def cmd_run(cfg: ExperimentConfig, args) -> int:
    result = run_protocol(cfg, out_dir=args.out, include_on_device=args.on_device)
    metrics = result.metrics
    logging.info(
        f"Accuracy: personalized {metrics['accuracy_personalized']:.4f}, "
        f"no-ID {metrics['accuracy_bootstrap']:.4f}, lift {metrics['lift_vs_no_id']:+.4f}"
    )
    return EXIT_OK


def cmd_sweep(cfg: ExperimentConfig, args) -> int:
    rows = sweep_variance(cfg, args.sigmas, out_dir=args.out)
    for row in rows:
        logging.info(f"sigma={row.sigma}: accuracy {row.accuracy:.4f}, misattribution {row.misattribution:.4f}")
    return EXIT_OK


def cmd_attack(cfg: ExperimentConfig, args) -> int:
    updates = {}
    if args.M is not None:
        updates["M"] = args.M
    if args.attacker is not None:
        updates["attacker"] = args.attacker
    if args.prior is not None:
        updates["prior"] = args.prior
    if updates:
        cfg = cfg.with_updates(attack=updates)

    task, _, trained = train_population(cfg)
    report = run_attack(cfg, task, trained)
    write_json(os.path.join(args.out, "attack_report.json"), report)
    write_csv(
        os.path.join(args.out, "attack_per_user.csv"),
        ["user", "misattribution"],
        enumerate(report.per_user_rates),
    )
    bound = "n/a" if report.theoretical_bound is None else f"{report.theoretical_bound:.4f}"
    logging.info(f"Misattribution {report.empirical_misattribution:.4f} (lower bound {bound})")
    return EXIT_OK


def cmd_verify(cfg: ExperimentConfig, args) -> int:
    report = verify_all(cfg, quick=args.quick, out_dir=args.out, only=args.stage)
    for stage_result in report.stages:
        logging.info(f"{stage_result.name}: {'PASS' if stage_result.passed else 'FAIL'}")
    return EXIT_OK if report.passed else EXIT_VERIFICATION_FAILED


def cmd_export_proj(cfg: ExperimentConfig, args) -> int:
    _, _, trained = train_population(cfg)
    samples = args.samples_per_user or cfg.projection.samples_per_user
    result = export_embedding_projection(
        [t.dist for t in trained],
        samples_per_user=samples,
        out_path=os.path.join(args.out, "projection.csv"),
        rng=np.random.default_rng(cfg.seeds.projection),
        tol=cfg.projection.tol,
        max_iterations=cfg.projection.max_iterations,
    )
    logging.info(f"Between/within variance ratio: {result.ratio:.4f}")
    return EXIT_OK


def cmd_baseline(cfg: ExperimentConfig, args) -> int:
    if args.kind == "no-id":
        summary = {"kind": args.kind, "accuracy": baseline_no_id(cfg)}
    elif args.kind == "on-device":
        per_user = baseline_on_device(cfg)
        summary = {"kind": args.kind, "accuracy": float(np.mean(per_user)), "per_user_accuracy": per_user}
    else:
        result = baseline_static_embedding(cfg)
        summary = {
            "kind": args.kind,
            "accuracy": result.evaluation.accuracy,
            "misattribution": result.attack.empirical_misattribution,
        }
    write_json(os.path.join(args.out, f"baseline_{args.kind}.json"), summary)
    logging.info(f"Baseline {args.kind}: accuracy {summary['accuracy']:.4f}")
    return EXIT_OK


def cmd_bound(cfg: ExperimentConfig, args) -> int:
    trainer = cfg.trainer
    T = trainer.t_max if trainer.epochs is None else trainer.steps_for(int(cfg.task.train_fraction * cfg.task.per_user))
    bound = misattribution_lower_bound(trainer.eta, T, trainer.clip_norm, trainer.sigma, cfg.task.N)
    logging.info(f"Misattribution lower bound for eta={trainer.eta}, T={T}, G={trainer.clip_norm}, "
                 f"sigma={trainer.sigma}, N={cfg.task.N}: {bound:.6f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='Anonymous user-embedding lab')
    parser.add_argument('--config', default='config.json', help='Path to configuration file')
    parser.add_argument('--seed', type=int, default=None, help='Reseed every named seed from one integer')
    parser.add_argument('--out', default='results', help='Output directory')
    parser.add_argument('--transport', default=None, help='inprocess or socket:HOST:PORT')
    parser.add_argument('--verbose', action='store_true', help='Debug logging')
    sub = parser.add_subparsers(dest='command', required=True)

    run = sub.add_parser('run', help='Run the full protocol')
    run.add_argument('--on-device', action='store_true', help='Also run the on-device baseline')
    run.set_defaults(handler=cmd_run)

    sweep = sub.add_parser('sweep', help='Accuracy and misattribution across sigma')
    sweep.add_argument('--sigmas', type=float, nargs='+', default=[0.0, 0.1, 0.2, 0.3])
    sweep.set_defaults(handler=cmd_sweep)

    attack = sub.add_parser('attack', help='Train distributions and run the attribution attack')
    attack.add_argument('--M', type=int, default=None, help='Draws per user')
    attack.add_argument('--attacker', choices=['posterior', 'nearest_mean'], default=None)
    attack.add_argument('--prior', choices=['uniform', 'dataset_size'], default=None)
    attack.set_defaults(handler=cmd_attack)

    verify = sub.add_parser('verify', help='Run the verification suite')
    verify.add_argument('--quick', action='store_true', help='Smaller sample sizes')
    verify.add_argument('--stage', action='append', default=None, help='Run only this stage (repeatable)')
    verify.set_defaults(handler=cmd_verify)

    export = sub.add_parser('export-proj', help='Export a 2-D projection of sampled embeddings')
    export.add_argument('--samples-per-user', type=int, default=None)
    export.set_defaults(handler=cmd_export_proj)

    baseline = sub.add_parser('baseline', help='Run one baseline')
    baseline.add_argument('--kind', choices=['no-id', 'on-device', 'static-embedding'], required=True)
    baseline.set_defaults(handler=cmd_baseline)

    bound = sub.add_parser('bound', help='Print the misattribution lower bound for the configuration')
    bound.set_defaults(handler=cmd_bound)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point."""
    args = build_parser().parse_args(argv)
    setup_logging(args.out, args.verbose)
    try:
        cfg = load_config(args)
        return args.handler(cfg, args)
    except (ConfigError, ValidationError) as e:
        logging.error(f"Configuration error: {e}")
        return EXIT_CONFIG_ERROR
    except StageError as e:
        logging.error(f"Protocol failed in stage '{e.stage}': {e.cause}")
        return EXIT_STAGE_FAILURE
    except EmbeddingLabError as e:
        logging.error(f"Error: {e}")
        return EXIT_STAGE_FAILURE


if __name__ == "__main__":
    sys.exit(main())
