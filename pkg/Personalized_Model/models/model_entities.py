import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from Embedding_Distribution.errors import ConfigError, ShapeError

_WEIGHT_NAMES = ("W1", "b1", "W2", "b2")


@dataclass(eq=False)
class FrozenModel:
    """
    Single-hidden-layer tanh classifier h consuming [u; x].

    When ``trainable`` is False the weight arrays are made read-only, so any
    attempted in-place update raises instead of silently changing the model.
    """
    d_u: int
    d_x: int
    d_h: int
    n_classes: int
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    trainable: bool = False
    loss_history: List[float] = field(default_factory=list)

    def __post_init__(self):
        expected = {
            "W1": (self.d_u + self.d_x, self.d_h),
            "b1": (self.d_h,),
            "W2": (self.d_h, self.n_classes),
            "b2": (self.n_classes,),
        }
        for name, shape in expected.items():
            array = np.array(getattr(self, name), dtype=float)
            if array.shape != shape:
                raise ShapeError(f"{name} has shape {array.shape}, expected {shape}")
            array.setflags(write=self.trainable)
            setattr(self, name, array)

    @property
    def input_width(self) -> int:
        return self.d_u + self.d_x

    @classmethod
    def init_random(
        cls,
        d_u: int,
        d_x: int,
        d_h: int,
        n_classes: int,
        rng: np.random.Generator,
        init_scale: float = 1.0,
        trainable: bool = False,
        embedding_scale: float = 1.0,
    ) -> "FrozenModel":
        """
        Gaussian init with variance init_scale^2 / fan_in; zero biases. The
        d_u embedding rows of W1 have their standard deviation multiplied by
        embedding_scale.
        """
        fan_in = d_u + d_x
        W1 = rng.normal(0.0, init_scale / np.sqrt(fan_in), size=(fan_in, d_h))
        W1[:d_u] *= embedding_scale
        return cls(
            d_u=d_u,
            d_x=d_x,
            d_h=d_h,
            n_classes=n_classes,
            W1=W1,
            b1=np.zeros(d_h),
            W2=rng.normal(0.0, init_scale / np.sqrt(d_h), size=(d_h, n_classes)),
            b2=np.zeros(n_classes),
            trainable=trainable,
        )

    @classmethod
    def zeros(cls, d_u: int, d_x: int, d_h: int, n_classes: int, trainable: bool = False):
        return cls(
            d_u=d_u,
            d_x=d_x,
            d_h=d_h,
            n_classes=n_classes,
            W1=np.zeros((d_u + d_x, d_h)),
            b1=np.zeros(d_h),
            W2=np.zeros((d_h, n_classes)),
            b2=np.zeros(n_classes),
            trainable=trainable,
        )

    def weights(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in _WEIGHT_NAMES}

    def _copy_as(self, model_class, trainable: bool):
        return model_class(
            d_u=self.d_u,
            d_x=self.d_x,
            d_h=self.d_h,
            n_classes=self.n_classes,
            trainable=trainable,
            loss_history=list(self.loss_history),
            **{name: array.copy() for name, array in self.weights().items()},
        )

    def freeze(self) -> "FrozenModel":
        """Read-only copy, the model a device downloads."""
        return self._copy_as(FrozenModel, trainable=False)

    def thaw(self) -> "CloudModel":
        """Private trainable copy for cloud-side training."""
        return self._copy_as(CloudModel, trainable=True)

    def checksum(self) -> str:
        """SHA-256 over dimensions and weight bytes."""
        digest = hashlib.sha256()
        digest.update(f"{self.d_u},{self.d_x},{self.d_h},{self.n_classes}".encode())
        for name in _WEIGHT_NAMES:
            digest.update(np.ascontiguousarray(getattr(self, name), dtype=np.float64).tobytes())
        return digest.hexdigest()

    def to_dict(self) -> Dict[str, Any]:
        """Checkpoint: dimensions plus row-major weight arrays."""
        return {
            "d_u": self.d_u,
            "d_x": self.d_x,
            "d_h": self.d_h,
            "n_classes": self.n_classes,
            **{name: getattr(self, name).tolist() for name in _WEIGHT_NAMES},
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], trainable: Optional[bool] = None):
        model_class = cls
        if trainable is None:
            trainable = cls is CloudModel
        return model_class(
            d_u=int(data["d_u"]),
            d_x=int(data["d_x"]),
            d_h=int(data["d_h"]),
            n_classes=int(data["n_classes"]),
            trainable=trainable,
            **{name: np.array(data[name], dtype=float) for name in _WEIGHT_NAMES},
        )

    def save_checkpoint(self, path: str) -> None:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load_checkpoint(cls, path: str):
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


@dataclass(eq=False)
class CloudModel(FrozenModel):
    """The classifier while the cloud is allowed to train it."""
    trainable: bool = True

    def __post_init__(self):
        if not self.trainable:
            raise ConfigError("CloudModel must be trainable; use freeze() for a read-only copy")
        super().__post_init__()


@dataclass(eq=False)
class ModelGradient:
    """Gradient record with the same shapes as the model weights."""
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([getattr(self, n).ravel() for n in _WEIGHT_NAMES])

    def norm(self) -> float:
        return float(np.linalg.norm(self.flat()))


@dataclass(eq=False)
class LabeledSample:
    x: np.ndarray
    y: int


@dataclass(eq=False)
class DeviceDataset:
    """
    One device's local data. ``local_user_id`` and ``true_bias`` stay on the
    device (and in the harness for diagnostics); neither is ever encoded on
    the wire.
    """
    local_user_id: int
    train: List[LabeledSample]
    test: List[LabeledSample]
    true_bias: np.ndarray

    def train_arrays(self):
        return _stack(self.train)

    def test_arrays(self):
        return _stack(self.test)

    def dump(self, path: str) -> None:
        """Write the local training split as line-delimited {"x", "y"} records."""
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            for item in self.train:
                f.write(json.dumps({"x": item.x.tolist(), "y": int(item.y)}) + "\n")


def _stack(samples: List[LabeledSample]):
    if not samples:
        return np.zeros((0, 0)), np.zeros(0, dtype=int)
    X = np.stack([s.x for s in samples])
    y = np.array([s.y for s in samples], dtype=int)
    return X, y


class SyntheticTaskSpec(BaseModel):
    """Parameters of the synthetic personalized classification task."""
    model_config = ConfigDict(extra="forbid")

    N: int = Field(50, ge=2, description="Number of users")
    per_user: int = Field(200, ge=4, description="Samples per user")
    d_x: int = Field(16, ge=1)
    C: int = Field(4, ge=2, description="Number of classes")
    kappa: float = Field(3.0, ge=0.0, description="User bias strength")
    label_noise: float = Field(0.05, ge=0.0, lt=0.5)
    bias_dim: int = Field(8, ge=1)
    train_fraction: float = Field(0.8, gt=0.0, lt=1.0)
    seed: int = 0

    @model_validator(mode="after")
    def _check_split(self):
        n_train = int(np.floor(self.train_fraction * self.per_user))
        if n_train < 1 or n_train >= self.per_user:
            raise ValueError("train_fraction must leave at least one train and one test sample")
        return self


@dataclass(eq=False)
class SyntheticTask:
    """Generated device datasets plus the generator's ground truth."""
    spec: SyntheticTaskSpec
    devices: List[DeviceDataset]
    feature_prototypes: np.ndarray
    bias_prototypes: np.ndarray

    @property
    def user_biases(self) -> np.ndarray:
        return np.stack([d.true_bias for d in self.devices])
