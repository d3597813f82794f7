from .parameter_transforms import (
    softplus,
    softplus_inverse,
    softplus_derivative,
    beta_to_raw,
    beta_from_raw,
)

__all__ = [
    'softplus',
    'softplus_inverse',
    'softplus_derivative',
    'beta_to_raw',
    'beta_from_raw'
]
