from .errors import (
    EmbeddingLabError,
    DomainError,
    ConvergenceError,
    NumericalError,
    ShapeError,
    ConfigError,
    StageError,
    VerificationError,
)
from .models.distribution_models import (
    DiagGaussian,
    BetaPerDim,
    EmbeddingDistribution,
    NoiseDraw,
    ParameterGradient,
    MixtureComponent,
    MixtureRepresentation,
    distribution_from_dict,
)
from .special_functions import (
    std_normal_cdf,
    reg_inc_beta,
    inverse_reg_inc_beta,
)
from .distribution_ops import (
    sample,
    log_pdf,
    cdf_marginal,
    draw_noise,
    reparam_sample,
    reparam_grad_params,
    reparam_jacobian,
    score_function_grad,
    distribution_moments,
    mixture_pdf,
    mixture_cdf_marginal,
    mixture_moments,
)

__all__ = [
    'EmbeddingLabError',
    'DomainError',
    'ConvergenceError',
    'NumericalError',
    'ShapeError',
    'ConfigError',
    'StageError',
    'VerificationError',
    'DiagGaussian',
    'BetaPerDim',
    'EmbeddingDistribution',
    'NoiseDraw',
    'ParameterGradient',
    'MixtureComponent',
    'MixtureRepresentation',
    'distribution_from_dict',
    'std_normal_cdf',
    'reg_inc_beta',
    'inverse_reg_inc_beta',
    'sample',
    'log_pdf',
    'cdf_marginal',
    'draw_noise',
    'reparam_sample',
    'reparam_grad_params',
    'reparam_jacobian',
    'score_function_grad',
    'distribution_moments',
    'mixture_pdf',
    'mixture_cdf_marginal',
    'mixture_moments'
]
