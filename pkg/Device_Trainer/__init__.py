from .trainer import (
    TrainerConfig,
    TrainedDistribution,
    EmbeddingSource,
    estimate_obj_grad,
    mc_gradient,
    mc_objective,
    clip,
    train_device,
    train_all_devices,
    device_seeds,
    emit_uploads,
)

__all__ = [
    'TrainerConfig',
    'TrainedDistribution',
    'EmbeddingSource',
    'estimate_obj_grad',
    'mc_gradient',
    'mc_objective',
    'clip',
    'train_device',
    'train_all_devices',
    'device_seeds',
    'emit_uploads'
]
