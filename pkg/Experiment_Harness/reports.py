"""
Writers for run outputs. JSON is written with sorted keys and fixed
indentation and nothing time-dependent, so identical runs produce identical
bytes.
"""

import csv
import json
import logging
import os
from typing import Any, Iterable, Sequence

import numpy as np
from pydantic import BaseModel

logger = logging.getLogger(__name__)


def _to_jsonable(obj: Any) -> Any:
    if isinstance(obj, BaseModel):
        return obj.model_dump()
    return obj


def _json_default(obj: Any) -> Any:
    if isinstance(obj, (np.ndarray, np.generic)):
        return obj.tolist()
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")


def write_json(path: str, obj: Any) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_to_jsonable(obj), f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")
    logger.debug(f"Wrote {path}")
    return path


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
    logger.debug(f"Wrote {path}")
    return path


def read_csv(path: str):
    """Rows as dicts keyed by the header."""
    with open(path, "r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))
