"""
Audits of the upload wire and of the collected dataset's order.

These checks run in the harness, which knows the ground truth of which device
produced which record; the cloud itself never does.
"""

import json
import logging
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel

from ..models.record_models import WIRE_KEYS, AnonymousRecord, CloudDataset

logger = logging.getLogger(__name__)

DEFAULT_FORBIDDEN_TOKENS = ("user", "device", "session", "id", "uid")


class WireAuditReport(BaseModel):
    records_scanned: int
    bad_key_sets: int
    forbidden_token_hits: List[str]
    passed: bool


def audit_wire_payloads(
    payloads: Iterable[bytes],
    forbidden_tokens: Sequence[str] = DEFAULT_FORBIDDEN_TOKENS,
) -> WireAuditReport:
    """
    Check that every uploaded line is an object with exactly the keys
    {e, x, y} and that no identifier-like token appears anywhere in the bytes.

    Args:
        payloads: Raw session byte streams as sent
        forbidden_tokens: Substrings that must not occur in any session
    """
    scanned = 0
    bad = 0
    hits: List[str] = []
    for payload in payloads:
        text = payload.decode("utf-8")
        lowered = text.lower()
        for token in forbidden_tokens:
            if token.lower() in lowered:
                hits.append(token)
        for line in text.splitlines():
            if not line.strip():
                continue
            scanned += 1
            obj = json.loads(line)
            if not isinstance(obj, dict) or set(obj.keys()) != WIRE_KEYS:
                bad += 1
    hits = sorted(set(hits))
    report = WireAuditReport(
        records_scanned=scanned,
        bad_key_sets=bad,
        forbidden_token_hits=hits,
        passed=bad == 0 and not hits and scanned > 0,
    )
    logger.info(
        f"Wire audit: {scanned} records, {bad} bad key sets, forbidden tokens {hits or 'none'}"
    )
    return report


def source_labels(
    dataset: CloudDataset, sessions: Sequence[Sequence[AnonymousRecord]]
) -> np.ndarray:
    """
    Ground-truth source index of every record in dataset order, matched by
    wire content. Identical records from different sources keep the first
    source seen.
    """
    lookup: Dict[str, int] = {}
    for source, records in enumerate(sessions):
        for record in records:
            lookup.setdefault(record.to_wire_line(), source)
    return np.array([lookup[r.to_wire_line()] for r in dataset.records], dtype=int)


def adjacent_same_source_count(labels: np.ndarray) -> int:
    labels = np.asarray(labels)
    return int(np.sum(labels[1:] == labels[:-1]))


def positional_clustering_p_value(
    labels: np.ndarray,
    n_permutations: int = 999,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """
    One-sided permutation runs test: the statistic is the number of adjacent
    positions sharing a source, large when sources cluster. Returns the
    fraction of random orders at least as clustered as the observed one.
    """
    rng = rng or np.random.default_rng(0)
    labels = np.asarray(labels)
    observed = adjacent_same_source_count(labels)
    at_least = sum(
        adjacent_same_source_count(rng.permutation(labels)) >= observed
        for _ in range(n_permutations)
    )
    return (1 + at_least) / (1 + n_permutations)
