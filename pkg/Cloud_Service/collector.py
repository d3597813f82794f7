"""
Collection of anonymous uploads into the cloud training set.

The final order depends only on record contents and the shuffle seed: each
record is keyed by SHA-256(seed || wire line) and the dataset is sorted by
key. Producers may therefore arrive in any order, concurrently, and the
collected dataset is the same.
"""

import hashlib
import logging
import threading
from typing import Iterable, List, Optional

from Embedding_Distribution.errors import ShapeError

from .models.record_models import AnonymousRecord, CloudDataset

logger = logging.getLogger(__name__)


def _shuffle_key(record: AnonymousRecord, seed: int) -> bytes:
    digest = hashlib.sha256()
    digest.update(seed.to_bytes(16, "big", signed=True))
    digest.update(record.to_wire_line().encode("utf-8"))
    return digest.digest()


def _check_dimensions(records: List[AnonymousRecord], d_u: Optional[int], d_x: Optional[int]):
    for record in records:
        if d_u is None:
            d_u, d_x = len(record.e), len(record.x)
        elif len(record.e) != d_u or len(record.x) != d_x:
            raise ShapeError(
                f"record dimensions (e={len(record.e)}, x={len(record.x)}) "
                f"differ from (e={d_u}, x={d_x})"
            )
    return d_u, d_x


def shuffle_records(records: List[AnonymousRecord], shuffle_seed: int) -> List[AnonymousRecord]:
    """Content-keyed seeded shuffle, independent of input order."""
    return sorted(records, key=lambda r: (_shuffle_key(r, shuffle_seed), r.to_wire_line()))


def collect(streams: Iterable[Iterable[AnonymousRecord]], shuffle_seed: int) -> CloudDataset:
    """
    Concatenate every source and shuffle.

    Args:
        streams: One iterable of records per source
        shuffle_seed: Seed of the shuffle

    Returns:
        The cloud dataset; source boundaries are not kept

    Raises:
        ShapeError: If records disagree on embedding or feature width
    """
    pooled: List[AnonymousRecord] = []
    for stream in streams:
        pooled.extend(stream)
    _check_dimensions(pooled, None, None)
    dataset = CloudDataset(records=shuffle_records(pooled, shuffle_seed), shuffle_seed=shuffle_seed)
    logger.info(f"Collected {len(dataset)} anonymous records")
    return dataset


class RecordCollector:
    """
    Thread-safe sink for concurrent upload sessions. Appends are serialized
    by a lock; ``build`` applies the content-keyed shuffle.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._records: List[AnonymousRecord] = []
        self._d_u: Optional[int] = None
        self._d_x: Optional[int] = None
        self.sessions = 0

    def submit(self, records: Iterable[AnonymousRecord]) -> int:
        """
        Append one session's records.

        Returns:
            Number of records accepted
        """
        batch = list(records)
        with self._lock:
            self._d_u, self._d_x = _check_dimensions(batch, self._d_u, self._d_x)
            self._records.extend(batch)
            self.sessions += 1
        logger.debug(f"Accepted session with {len(batch)} records")
        return len(batch)

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)

    def build(self, shuffle_seed: int) -> CloudDataset:
        with self._lock:
            snapshot = list(self._records)
        return collect([snapshot], shuffle_seed)
