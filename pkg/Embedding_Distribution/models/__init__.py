from .distribution_models import (
    DiagGaussian,
    BetaPerDim,
    EmbeddingDistribution,
    NoiseDraw,
    ParameterGradient,
    MixtureComponent,
    MixtureRepresentation,
    distribution_from_dict,
)

__all__ = [
    'DiagGaussian',
    'BetaPerDim',
    'EmbeddingDistribution',
    'NoiseDraw',
    'ParameterGradient',
    'MixtureComponent',
    'MixtureRepresentation',
    'distribution_from_dict'
]
