"""
Experiment configuration.

One JSON document, one section per concern. The ``Configuration`` class
loads it the way the backend always has (defaults merged with the file,
defaults written out when the file is missing), and the merged document is
then validated by the pydantic models below. Unknown keys are errors.
"""

import json
import logging
import os
import re
from typing import Any, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from Device_Trainer.trainer import TrainerConfig
from Embedding_Distribution.errors import ConfigError
from Personalized_Model.models.model_entities import SyntheticTaskSpec

logger = logging.getLogger(__name__)

_SOCKET_TRANSPORT = re.compile(r"^socket(:[^:]*:\d+)?$")


class ModelSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    d_u: int = Field(16, ge=1, description="Embedding width")
    d_h: int = Field(32, ge=1, description="Hidden units")
    init_scale: float = Field(1.0, gt=0.0)
    embedding_init_scale: float = Field(
        8.0,
        gt=0.0,
        description="Std multiplier for the embedding rows of W1, which bootstrap training never updates",
    )
    seed: int = 0


class CloudSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    bootstrap_epochs: int = Field(20, ge=0)
    finetune_epochs: int = Field(20, ge=0)
    lr: float = Field(0.1, gt=0.0)
    batch_size: int = Field(64, ge=1)
    lr_schedule: Literal["constant", "linear"] = "constant"
    finetune_from: Literal["bootstrap", "scratch"] = Field(
        "bootstrap", description="Start each fine-tune from the served weights or from a fresh init"
    )
    on_device_epochs: int = Field(10, ge=0, description="Local full fine-tune for the on-device baseline")
    on_device_lr: float = Field(0.1, gt=0.0)
    write_records: bool = Field(False, description="Persist the collected dataset as cloud_records.jsonl")


class AttackSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    M: int = Field(1000, ge=1, description="Embeddings drawn per user")
    prior: Literal["uniform", "dataset_size"] = "uniform"
    attacker: Literal["posterior", "nearest_mean"] = "posterior"
    bound_slack: float = Field(0.01, ge=0.0)
    assert_misattribution: bool = Field(
        False, description="Fail a run whose misattribution is zero"
    )


class EntropySettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    enabled: bool = True
    K: int = Field(20, ge=2)
    bucket_edges: Optional[List[float]] = None

    @model_validator(mode="after")
    def _check_edges(self):
        if self.bucket_edges is not None:
            edges = np.asarray(self.bucket_edges, dtype=float)
            if len(edges) < 2 or np.any(np.diff(edges) <= 0):
                raise ValueError("bucket_edges must be strictly increasing")
        return self


class ProjectionSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    samples_per_user: int = Field(10, ge=1)
    tol: float = Field(1e-9, gt=0.0)
    max_iterations: int = Field(10000, ge=1)


class InferenceSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    embedding_policy: Literal["fresh", "cached"] = "fresh"
    cache_size: int = Field(64, ge=1)


class SeedSettings(BaseModel):
    """Every random behavior outside data generation and model init draws from one of these."""
    model_config = ConfigDict(extra="forbid")

    devices: int = 0
    uploads: int = 1
    shuffle: int = 2
    cloud: int = 3
    evaluation: int = 4
    attack: int = 5
    entropy: int = 6
    projection: int = 7


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    task: SyntheticTaskSpec = Field(default_factory=SyntheticTaskSpec)
    model: ModelSettings = Field(default_factory=ModelSettings)
    trainer: TrainerConfig = Field(default_factory=TrainerConfig)
    cloud: CloudSettings = Field(default_factory=CloudSettings)
    attack: AttackSettings = Field(default_factory=AttackSettings)
    entropy: EntropySettings = Field(default_factory=EntropySettings)
    projection: ProjectionSettings = Field(default_factory=ProjectionSettings)
    inference: InferenceSettings = Field(default_factory=InferenceSettings)
    seeds: SeedSettings = Field(default_factory=SeedSettings)
    transport: str = "inprocess"
    rounds: int = Field(1, ge=1)
    workers: int = Field(1, ge=1, description="Thread pool size for device training and attacks")

    @model_validator(mode="after")
    def _check_consistency(self):
        if self.transport != "inprocess" and not _SOCKET_TRANSPORT.match(self.transport):
            raise ValueError(f"transport must be 'inprocess' or 'socket:HOST:PORT', got {self.transport!r}")
        try:
            self.trainer.resolve_shared_init(self.model.d_u)
        except ConfigError as e:
            raise ValueError(str(e)) from e
        if self.entropy.enabled and self.entropy.K > self.task.N:
            raise ValueError(f"entropy.K={self.entropy.K} exceeds the number of users {self.task.N}")
        return self

    def reseeded(self, seed: int) -> "ExperimentConfig":
        """Copy with every named seed derived from one integer."""
        names = ["task", "model", "trainer"] + list(SeedSettings.model_fields)
        values = dict(zip(names, (int(s) for s in np.random.SeedSequence(seed).generate_state(len(names)))))
        return self.model_copy(
            update={
                "task": self.task.model_copy(update={"seed": values["task"]}),
                "model": self.model.model_copy(update={"seed": values["model"]}),
                "trainer": self.trainer.model_copy(update={"seed": values["trainer"]}),
                "seeds": SeedSettings(**{k: values[k] for k in SeedSettings.model_fields}),
            }
        )

    def with_updates(self, **sections: Dict[str, Any]) -> "ExperimentConfig":
        """Validated copy with some section fields replaced, e.g. trainer={"sigma": 0.1}."""
        data = self.model_dump()
        for section, values in sections.items():
            if isinstance(values, dict) and isinstance(data.get(section), dict):
                data[section].update(values)
            else:
                data[section] = values
        return load_experiment_config(data)


def load_experiment_config(data: Dict[str, Any]) -> ExperimentConfig:
    """
    Validate a configuration document.

    Raises:
        ConfigError: On unknown keys, bad values or inconsistent dimensions
    """
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {e}") from e


class Configuration:
    """Configuration for an experiment run."""

    def __init__(self, config_file: str = "config.json"):
        """
        Initialize with configuration from file.

        Args:
            config_file: Path to configuration file
        """
        self.config_file = config_file
        self.config: Dict[str, Any] = ExperimentConfig().model_dump()
        self.load_config()

    def load_config(self):
        """
        Merge the file into the defaults section by section.

        Raises:
            ConfigError: If the file is not valid JSON
        """
        if not os.path.exists(self.config_file):
            self.save_config()
            logger.info(f"Created default configuration file at {self.config_file}")
            return
        try:
            with open(self.config_file, 'r') as f:
                file_config = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"Cannot read configuration {self.config_file}: {e}") from e
        if not isinstance(file_config, dict):
            raise ConfigError(f"Configuration {self.config_file} must be a JSON object")

        for section, values in file_config.items():
            if isinstance(values, dict) and isinstance(self.config.get(section), dict):
                self.config[section].update(values)
            else:
                self.config[section] = values
        logger.info(f"Loaded configuration from {self.config_file}")

    def save_config(self):
        """Save configuration to file."""
        os.makedirs(os.path.dirname(os.path.abspath(self.config_file)), exist_ok=True)
        with open(self.config_file, 'w') as f:
            json.dump(self.config, f, indent=2, sort_keys=True)
        logger.info(f"Saved configuration to {self.config_file}")

    def get(self, section: str, key: str, default: Any = None) -> Any:
        """
        Get a configuration value.

        Args:
            section: Section name
            key: Key name
            default: Default value if not found
        """
        if section in self.config and isinstance(self.config[section], dict):
            return self.config[section].get(key, default)
        return default

    def set(self, section: str, key: str, value: Any):
        """Set a configuration value in memory."""
        if section not in self.config or not isinstance(self.config[section], dict):
            self.config[section] = {}
        self.config[section][key] = value

    def experiment(self) -> ExperimentConfig:
        return load_experiment_config(self.config)
