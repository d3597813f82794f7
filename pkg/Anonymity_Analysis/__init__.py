from .models.report_models import (
    AttackReport,
    EntropyBucketReport,
    GapReport,
    NonIdentifiabilityReport,
    ClosenessCheck,
)
from .attribution import (
    uniform_prior,
    dataset_size_prior,
    posterior_argmax,
    posterior_argmax_batch,
    nearest_mean,
    nearest_mean_batch,
    misattribution_mc,
    misattribution_lower_bound,
    closer_to_own_mean_probability,
    closer_to_own_mean_frequency,
    check_closeness,
    pairwise_gap_check,
    attack_labels,
)
from .identifiability import (
    decomposition_coefficients,
    beta_decompose,
    chained_decompositions,
    beta_witness,
    verify_nonidentifiability,
)
from .user_entropy import default_bucket_edges, prediction_entropy, user_entropy_analysis

__all__ = [
    'AttackReport',
    'EntropyBucketReport',
    'GapReport',
    'NonIdentifiabilityReport',
    'ClosenessCheck',
    'uniform_prior',
    'dataset_size_prior',
    'posterior_argmax',
    'posterior_argmax_batch',
    'nearest_mean',
    'nearest_mean_batch',
    'misattribution_mc',
    'misattribution_lower_bound',
    'closer_to_own_mean_probability',
    'closer_to_own_mean_frequency',
    'check_closeness',
    'pairwise_gap_check',
    'attack_labels',
    'decomposition_coefficients',
    'beta_decompose',
    'chained_decompositions',
    'beta_witness',
    'verify_nonidentifiability',
    'default_bucket_edges',
    'prediction_entropy',
    'user_entropy_analysis'
]
