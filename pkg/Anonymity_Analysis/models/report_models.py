from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator


class AttackReport(BaseModel):
    """Outcome of a single-embedding attribution attack."""
    empirical_misattribution: float = Field(ge=0.0, le=1.0)
    theoretical_bound: Optional[float] = Field(None, ge=0.0, le=1.0)
    samples_per_user: int = Field(ge=1)
    per_user_rates: List[float]
    misattributed: int = Field(ge=0)
    total: int = Field(ge=0)
    attacker: str = "posterior"
    prior_mode: str = "uniform"

    @model_validator(mode="after")
    def _check_frequency(self):
        if self.misattributed > self.total:
            raise ValueError("misattributed count exceeds the number of attacks")
        if any(not 0.0 <= r <= 1.0 for r in self.per_user_rates):
            raise ValueError("per-user rates must lie in [0, 1]")
        return self

    @property
    def bound_slack(self) -> Optional[float]:
        """Empirical rate minus the lower bound; None when no bound applies."""
        if self.theoretical_bound is None:
            return None
        return self.empirical_misattribution - self.theoretical_bound


class EntropyBucketReport(BaseModel):
    """
    Accuracy bucketed by user entropy, the entropy of one test sample's
    predictions under embeddings of K different users.
    """
    bucket_edges: List[float]
    per_bucket_accuracy: List[float]
    per_bucket_count: List[int]
    K: int = Field(ge=2)
    per_bucket_baseline_accuracy: Optional[List[float]] = None

    @model_validator(mode="after")
    def _check_buckets(self):
        if len(self.bucket_edges) < 2 or np.any(np.diff(self.bucket_edges) <= 0):
            raise ValueError("bucket edges must be strictly increasing with at least two edges")
        n_buckets = len(self.bucket_edges) - 1
        if len(self.per_bucket_accuracy) != n_buckets or len(self.per_bucket_count) != n_buckets:
            raise ValueError(f"expected {n_buckets} bucket values")
        if self.per_bucket_baseline_accuracy is not None and len(
            self.per_bucket_baseline_accuracy
        ) != n_buckets:
            raise ValueError(f"expected {n_buckets} baseline bucket values")
        return self

    @property
    def total_count(self) -> int:
        return int(sum(self.per_bucket_count))

    def lifts(self) -> Optional[List[float]]:
        """Per-bucket accuracy minus baseline accuracy, if a baseline was measured."""
        if self.per_bucket_baseline_accuracy is None:
            return None
        return [a - b for a, b in zip(self.per_bucket_accuracy, self.per_bucket_baseline_accuracy)]

    def occupied_lifts(self) -> List[float]:
        """Lifts of the non-empty buckets, lowest entropy first."""
        lifts = self.lifts() or []
        return [lift for lift, count in zip(lifts, self.per_bucket_count) if count > 0]


class GapReport(BaseModel):
    """Largest pairwise distance between trained means against 2 * eta * T * G."""
    max_gap: float = Field(ge=0.0)
    bound: float = Field(ge=0.0)
    n_pairs: int = Field(ge=0)
    violations: int = Field(ge=0)
    passed: bool


class NonIdentifiabilityReport(BaseModel):
    """Grid comparison of two mixture representations."""
    max_pdf_diff: float
    max_cdf_diff: float
    tol: float
    grid_resolution: int
    representations_differ: bool
    passed: bool

    @property
    def max_diff(self) -> float:
        return max(self.max_pdf_diff, self.max_cdf_diff)


class ClosenessCheck(BaseModel):
    """Closed-form vs Monte Carlo probability of a draw being nearer its own mean."""
    distance: float = Field(ge=0.0)
    sigma: float = Field(gt=0.0)
    d: int = Field(ge=1)
    n_draws: int = Field(ge=1)
    closed_form: float
    empirical: float
    abs_error: float
    passed: bool
