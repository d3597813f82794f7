import json
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

# The complete key set of a record on the wire
WIRE_KEYS = frozenset({"e", "x", "y"})


class AnonymousRecord(BaseModel):
    """
    One uploaded training example: a sampled embedding, the raw features and
    the label. There is deliberately no field for a user or device.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    e: List[float]
    x: List[float]
    y: int = Field(ge=0)

    @classmethod
    def from_arrays(cls, e: np.ndarray, x: np.ndarray, y: int) -> "AnonymousRecord":
        return cls(e=[float(v) for v in e], x=[float(v) for v in x], y=int(y))

    def to_wire_line(self) -> str:
        """Newline-terminated UTF-8 JSON line with exactly the keys e, x, y."""
        return json.dumps({"e": self.e, "x": self.x, "y": self.y}, separators=(",", ":")) + "\n"

    @classmethod
    def from_wire_line(cls, line: str) -> "AnonymousRecord":
        return cls.model_validate(json.loads(line))


@dataclass
class CloudDataset:
    """
    The enhanced training set assembled by the cloud. Record order is the
    seeded shuffle; nothing about which device sent what survives.
    """
    records: List[AnonymousRecord]
    shuffle_seed: int
    _arrays: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]] = field(
        default=None, init=False, repr=False, compare=False
    )

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[AnonymousRecord]:
        return iter(self.records)

    @property
    def d_u(self) -> int:
        return len(self.records[0].e) if self.records else 0

    @property
    def d_x(self) -> int:
        return len(self.records[0].x) if self.records else 0

    def arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(E, X, y) stacked in dataset order."""
        if self._arrays is None:
            E = np.array([r.e for r in self.records], dtype=float).reshape(len(self), self.d_u)
            X = np.array([r.x for r in self.records], dtype=float).reshape(len(self), self.d_x)
            y = np.array([r.y for r in self.records], dtype=int)
            self._arrays = (E, X, y)
        return self._arrays

    def write_record_file(self, path: str) -> None:
        """Persist as a flat newline-delimited record file."""
        with open(path, "w", encoding="utf-8") as f:
            for record in self.records:
                f.write(record.to_wire_line())
