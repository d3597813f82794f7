from .config import (
    Configuration,
    ExperimentConfig,
    ModelSettings,
    CloudSettings,
    AttackSettings,
    EntropySettings,
    ProjectionSettings,
    InferenceSettings,
    SeedSettings,
    load_experiment_config,
)
from .protocol import (
    ProtocolResult,
    run_protocol,
    baseline_no_id,
    baseline_on_device,
    baseline_static_embedding,
    prepare_bootstrap,
    run_attack,
    train_population,
    emit_all_uploads,
    send_sessions,
)
from .sweep import SweepRow, sweep_variance
from .projection import (
    ProjectionResult,
    export_embedding_projection,
    power_iteration_pca,
    between_within_ratio,
)
from .verification import VerificationReport, StageResult, verify_all

__all__ = [
    'Configuration',
    'ExperimentConfig',
    'ModelSettings',
    'CloudSettings',
    'AttackSettings',
    'EntropySettings',
    'ProjectionSettings',
    'InferenceSettings',
    'SeedSettings',
    'load_experiment_config',
    'ProtocolResult',
    'run_protocol',
    'baseline_no_id',
    'baseline_on_device',
    'baseline_static_embedding',
    'prepare_bootstrap',
    'run_attack',
    'train_population',
    'emit_all_uploads',
    'send_sessions',
    'SweepRow',
    'sweep_variance',
    'ProjectionResult',
    'export_embedding_projection',
    'power_iteration_pca',
    'between_within_ratio',
    'VerificationReport',
    'StageResult',
    'verify_all'
]
