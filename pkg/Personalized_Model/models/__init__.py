from .model_entities import (
    FrozenModel,
    CloudModel,
    ModelGradient,
    LabeledSample,
    DeviceDataset,
    SyntheticTaskSpec,
    SyntheticTask,
)

__all__ = [
    'FrozenModel',
    'CloudModel',
    'ModelGradient',
    'LabeledSample',
    'DeviceDataset',
    'SyntheticTaskSpec',
    'SyntheticTask'
]
