from .report_models import (
    AttackReport,
    EntropyBucketReport,
    GapReport,
    NonIdentifiabilityReport,
    ClosenessCheck,
)

__all__ = [
    'AttackReport',
    'EntropyBucketReport',
    'GapReport',
    'NonIdentifiabilityReport',
    'ClosenessCheck'
]
