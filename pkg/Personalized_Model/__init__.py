from .models.model_entities import (
    FrozenModel,
    CloudModel,
    ModelGradient,
    LabeledSample,
    DeviceDataset,
    SyntheticTaskSpec,
    SyntheticTask,
)
from .classifier import (
    forward,
    loss,
    grad_embedding,
    grad_model,
    grad_input,
    mean_loss,
    predict,
)
from .synthetic_data import (
    generate_synthetic,
    oracle_accuracy,
    pooled_samples,
    clean_scores,
)

__all__ = [
    'FrozenModel',
    'CloudModel',
    'ModelGradient',
    'LabeledSample',
    'DeviceDataset',
    'SyntheticTaskSpec',
    'SyntheticTask',
    'forward',
    'loss',
    'grad_embedding',
    'grad_model',
    'grad_input',
    'mean_loss',
    'predict',
    'generate_synthetic',
    'oracle_accuracy',
    'pooled_samples',
    'clean_scores'
]
