"""
Experiment and ingest configuration models
"""

import hashlib
import json
import logging
import math
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import yaml
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from estimators.registry import EstimatorKind, EstimatorSpec
from interfaces.dataio import TrajectorySchema
from safety.guards import ConfigError
from simulation.system import InitialState


logger = logging.getLogger(__name__)


class SweepAxis(Enum):
    N = "n"
    T = "T"
    SIGMA = "sigma"
    DELTA_RATIO = "delta_ratio"
    LAMBDA = "lambda"


class SystemConfig(BaseModel):
    """Parameters of the generated Gaussian-linear system."""
    d: int = Field(default=25, description="State dimension")
    T: int = Field(default=10, description="Sequence length (time points)")
    kappa: float = Field(default=1.5, description="Spectral radius of every transition")
    entry_std: float = Field(default=0.2, description="Std of off-diagonal transition entries and of beta")
    sigma: Union[float, List[float]] = Field(default=1.0, description="Per-step noise std, scalar or T-1 values")
    sigma_Y: float = Field(default=1.0, description="Outcome noise std")
    initial_mean: float = Field(default=0.0, description="Mean of each X1 coordinate")
    initial_std: float = Field(default=math.sqrt(5.0), description="Std of each X1 coordinate")
    stationary: bool = Field(default=False, description="Share one transition across all steps")
    delta_ratio: Optional[float] = Field(default=None, description="||delta|| / ||beta||; None keeps Y Markov")

    @model_validator(mode="after")
    def _check(self) -> "SystemConfig":
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        if self.T < 2:
            raise ValueError(f"T must be >= 2, got {self.T}")
        if not self.kappa > 0:
            raise ValueError(f"kappa must be > 0, got {self.kappa}")
        scales = self.sigma if isinstance(self.sigma, list) else [self.sigma]
        if isinstance(self.sigma, list) and len(self.sigma) != self.T - 1:
            raise ValueError(f"sigma list needs T-1={self.T - 1} values, got {len(self.sigma)}")
        for value in [*scales, self.sigma_Y, self.entry_std, self.initial_std]:
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"noise and std parameters must be finite and >= 0, got {value}")
        if self.delta_ratio is not None and not self.delta_ratio >= 0:
            raise ValueError(f"delta_ratio must be >= 0, got {self.delta_ratio}")
        return self

    @property
    def initial_state(self) -> InitialState:
        return InitialState(mean=self.initial_mean, std=self.initial_std)


class SweepConfig(BaseModel):
    """The single swept variable and its grid."""
    axis: SweepAxis = Field(default=SweepAxis.N, description="Swept variable")
    values: List[float] = Field(default=[1000], description="Grid of values, run in order")

    @model_validator(mode="after")
    def _check_values(self) -> "SweepConfig":
        if not self.values:
            raise ValueError("sweep needs at least one value")
        for value in self.values:
            if not math.isfinite(value):
                raise ValueError(f"sweep values must be finite, got {value}")
            if self.axis in (SweepAxis.N, SweepAxis.T) and value != int(value):
                raise ValueError(f"{self.axis.value} values must be integers, got {value}")
            if self.axis is SweepAxis.N and value < 1:
                raise ValueError(f"n values must be >= 1, got {value}")
            if self.axis is SweepAxis.T and value < 2:
                raise ValueError(f"T values must be >= 2, got {value}")
            if self.axis in (SweepAxis.SIGMA, SweepAxis.DELTA_RATIO) and value < 0:
                raise ValueError(f"{self.axis.value} values must be >= 0, got {value}")
            if self.axis is SweepAxis.LAMBDA and not 0.0 <= value <= 1.0:
                raise ValueError(f"lambda values must lie in [0, 1], got {value}")
        return self


def _coerce_estimators(value: Any) -> Any:
    if isinstance(value, list):
        return [{"kind": item} if isinstance(item, str) else item for item in value]
    return value


class ExperimentConfig(BaseModel):
    """One sweep over one axis with N replicates per value."""
    name: str = Field(default="experiment", description="Run name, echoed in outputs")
    system: SystemConfig = Field(default_factory=SystemConfig, description="Generated system parameters")
    sweep: SweepConfig = Field(default_factory=SweepConfig, description="Swept axis and grid")
    n: int = Field(default=1000, description="Training rows when n is not swept")
    m_test: int = Field(default=1000, description="Held-out rows per replicate")
    replicates: int = Field(default=200, description="Replicates per sweep value")
    estimators: List[EstimatorSpec] = Field(
        default_factory=lambda: [EstimatorSpec(kind=EstimatorKind.BASELINE), EstimatorSpec(kind=EstimatorKind.LUPTS)],
        description="Estimators fitted in every replicate",
    )
    master_seed: int = Field(default=20220601, description="Master seed of every stream")
    output: Optional[str] = Field(default=None, description="Output path prefix")
    fix_system: bool = Field(default=False, description="Reuse one system per sweep value across replicates")
    evaluate_risk_terms: bool = Field(default=False, description="Record risk-expansion terms for chain estimators")
    workers: int = Field(default=1, description="Worker threads")

    @field_validator("estimators", mode="before")
    @classmethod
    def _labels_to_specs(cls, value: Any) -> Any:
        return _coerce_estimators(value)

    @model_validator(mode="after")
    def _check(self) -> "ExperimentConfig":
        if self.replicates < 1:
            raise ValueError(f"replicates must be >= 1, got {self.replicates}")
        if self.m_test < 1:
            raise ValueError(f"m_test must be >= 1, got {self.m_test}")
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError(f"master_seed must fit in 64 bits, got {self.master_seed}")
        if not self.estimators:
            raise ValueError("at least one estimator is required")
        labels = [spec.label for spec in self.estimators]
        if len(set(labels)) != len(labels):
            raise ValueError(f"estimator labels must be unique, got {labels}")
        return self

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        try:
            return cls(**data)
        except ValidationError as e:
            raise ConfigError(f"invalid experiment config: {_first_error(e)}", errors=_error_list(e)) from e

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ExperimentConfig":
        """Load a JSON or YAML config file."""
        data = _read_mapping(path)
        return cls.from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")

    def fingerprint(self) -> str:
        """Short hash of the resolved config, without output and worker settings."""
        payload = self.model_dump(mode="json", exclude={"output", "workers"})
        digest = hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()
        return digest[:16]

    def system_at(self, axis_value: float) -> SystemConfig:
        """System parameters with the sweep value applied."""
        axis = self.sweep.axis
        if axis is SweepAxis.T:
            return self.system.model_copy(update={"T": int(axis_value), "sigma": _scalar_sigma(self.system)})
        if axis is SweepAxis.SIGMA:
            return self.system.model_copy(update={"sigma": float(axis_value)})
        if axis is SweepAxis.DELTA_RATIO:
            return self.system.model_copy(update={"delta_ratio": float(axis_value)})
        return self.system

    def n_at(self, axis_value: float) -> int:
        return int(axis_value) if self.sweep.axis is SweepAxis.N else self.n

    def estimators_at(self, axis_value: float) -> List[EstimatorSpec]:
        """Estimator specs with a swept lambda applied to the fixed-lambda distillers."""
        if self.sweep.axis is not SweepAxis.LAMBDA:
            return list(self.estimators)
        return [
            spec.model_copy(update={"distill_lambda": float(axis_value)})
            if spec.kind in (EstimatorKind.DISTILL_SEQ, EstimatorKind.DISTILL_CONCAT) else spec
            for spec in self.estimators
        ]


def _scalar_sigma(system: SystemConfig) -> float:
    if isinstance(system.sigma, list):
        raise ConfigError("a T sweep needs a scalar sigma")
    return system.sigma


class IngestConfig(BaseModel):
    """Evaluation protocol on an external trajectory CSV."""
    name: str = Field(default="ingest", description="Run name, echoed in outputs")
    csv_path: str = Field(description="Trajectory CSV file")
    data_schema: TrajectorySchema = Field(alias="schema", description="CSV schema")
    estimators: List[EstimatorSpec] = Field(
        default_factory=lambda: [EstimatorSpec(kind=EstimatorKind.BASELINE), EstimatorSpec(kind=EstimatorKind.LUPTS)],
        description="Estimators fitted on every training subsample",
    )
    train_sizes: List[int] = Field(description="Training subsample sizes")
    replicates: int = Field(default=20, description="Subsamples per train size")
    test_fraction: float = Field(default=0.2, description="Held-out share of rows")
    master_seed: int = Field(default=20220601, description="Master seed")
    output: Optional[str] = Field(default=None, description="Output path prefix")

    model_config = {"populate_by_name": True}

    @field_validator("estimators", mode="before")
    @classmethod
    def _labels_to_specs(cls, value: Any) -> Any:
        return _coerce_estimators(value)

    @model_validator(mode="after")
    def _check(self) -> "IngestConfig":
        if not self.train_sizes or any(size < 1 for size in self.train_sizes):
            raise ValueError(f"train_sizes must be positive integers, got {self.train_sizes}")
        if self.replicates < 1:
            raise ValueError(f"replicates must be >= 1, got {self.replicates}")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError(f"test_fraction must lie in (0, 1), got {self.test_fraction}")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError(f"master_seed must fit in 64 bits, got {self.master_seed}")
        if not self.estimators:
            raise ValueError("at least one estimator is required")
        return self

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "IngestConfig":
        try:
            return cls(**data)
        except ValidationError as e:
            raise ConfigError(f"invalid ingest config: {_first_error(e)}", errors=_error_list(e)) from e

    def to_dict(self) -> Dict[str, Any]:
        return self.model_dump(mode="json", by_alias=True)


def _read_mapping(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except OSError as e:
        raise ConfigError(f"could not read config {path}: {e}", path=str(path)) from e
    except yaml.YAMLError as e:
        raise ConfigError(f"config {path} is neither JSON nor YAML: {e}", path=str(path)) from e
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a mapping", path=str(path))
    return data


def _error_list(error: ValidationError) -> List[str]:
    return [f"{'.'.join(str(p) for p in item['loc'])}: {item['msg']}" for item in error.errors()]


def _first_error(error: ValidationError) -> str:
    errors = _error_list(error)
    return errors[0] if errors else str(error)
