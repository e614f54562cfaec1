"""
Ground-truth system and trajectory dataset types
"""

import json
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.regression import Matrix
from safety.guards import (
    DimensionError,
    ParameterError,
    SchemaError,
    as_matrix,
)


@dataclass(frozen=True)
class InitialState:
    """i.i.d. Normal(mean, std^2) per coordinate of X1."""
    mean: float = 0.0
    std: float = math.sqrt(5.0)

    def __post_init__(self):
        if not math.isfinite(self.mean) or not math.isfinite(self.std) or self.std < 0:
            raise ParameterError(f"invalid initial state N({self.mean}, {self.std}^2)")


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """Gaussian-linear dynamical system X_t = X_{t-1} A_{t-1} + e_t, Y = X_T beta + e_Y.

    noise_scales[k] is the std of the noise entering X_{k+2}. markov_violation,
    when set, adds X1 @ delta to Y; raw_violation is the frozen unscaled draw
    it is derived from.
    """
    transitions: Tuple[Matrix, ...]
    outcome_weights: Matrix
    noise_scales: Tuple[float, ...]
    outcome_noise: float
    initial_state: InitialState = field(default_factory=InitialState)
    markov_violation: Optional[Matrix] = None
    raw_violation: Optional[Matrix] = None
    stationary: bool = False

    def __post_init__(self):
        transitions = tuple(as_matrix(a, f"transitions[{i}]") for i, a in enumerate(self.transitions))
        if len(transitions) < 1:
            raise ParameterError("a system needs T >= 2, i.e. at least one transition")
        d = transitions[0].shape[0]
        for i, a in enumerate(transitions):
            if a.shape != (d, d):
                raise DimensionError(f"transitions[{i}] has shape {a.shape}, expected ({d}, {d})", index=i)
        beta = as_matrix(self.outcome_weights, "outcome_weights")
        if beta.shape != (d, 1):
            raise DimensionError(f"outcome_weights has shape {beta.shape}, expected ({d}, 1)")
        scales = tuple(float(s) for s in self.noise_scales)
        if len(scales) != len(transitions):
            raise DimensionError(f"expected {len(transitions)} noise scales, got {len(scales)}")
        if any(not math.isfinite(s) or s < 0 for s in scales) or not math.isfinite(self.outcome_noise) \
                or self.outcome_noise < 0:
            raise ParameterError("noise scales must be finite and >= 0", noise_scales=scales)
        if self.stationary and any(not np.array_equal(a, transitions[0]) for a in transitions[1:]):
            raise ParameterError("stationary systems must share one transition matrix")
        for name in ("markov_violation", "raw_violation"):
            value = getattr(self, name)
            if value is not None:
                value = as_matrix(value, name)
                if value.shape != (d, 1):
                    raise DimensionError(f"{name} has shape {value.shape}, expected ({d}, 1)")
                object.__setattr__(self, name, value)
        object.__setattr__(self, "transitions", transitions)
        object.__setattr__(self, "outcome_weights", beta)
        object.__setattr__(self, "noise_scales", scales)
        object.__setattr__(self, "outcome_noise", float(self.outcome_noise))

    @property
    def dim(self) -> int:
        return self.transitions[0].shape[0]

    @property
    def horizon(self) -> int:
        return len(self.transitions) + 1

    def to_dict(self) -> Dict[str, Any]:
        return {
            "dim": self.dim,
            "horizon": self.horizon,
            "transitions": [a.tolist() for a in self.transitions],
            "outcome_weights": self.outcome_weights.tolist(),
            "noise_scales": list(self.noise_scales),
            "outcome_noise": self.outcome_noise,
            "initial_state": {"mean": self.initial_state.mean, "std": self.initial_state.std},
            "markov_violation": None if self.markov_violation is None else self.markov_violation.tolist(),
            "raw_violation": None if self.raw_violation is None else self.raw_violation.tolist(),
            "stationary": self.stationary,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SystemSpec":
        try:
            spec = cls(
                transitions=tuple(np.array(a, dtype=np.float64) for a in data["transitions"]),
                outcome_weights=np.array(data["outcome_weights"], dtype=np.float64),
                noise_scales=tuple(data["noise_scales"]),
                outcome_noise=data["outcome_noise"],
                initial_state=InitialState(**data.get("initial_state", {})),
                markov_violation=_optional_array(data.get("markov_violation")),
                raw_violation=_optional_array(data.get("raw_violation")),
                stationary=bool(data.get("stationary", False)),
            )
        except KeyError as e:
            raise SchemaError(f"system document is missing field {e}") from e
        if "dim" in data and data["dim"] != spec.dim or "horizon" in data and data["horizon"] != spec.horizon:
            raise SchemaError("dim/horizon fields disagree with the transition matrices")
        return spec

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SystemSpec":
        return cls.from_dict(json.loads(text))


def _optional_array(value: Any) -> Optional[Matrix]:
    return None if value is None else np.array(value, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class TrajectoryDataset:
    """m sampled series: states[t] is the m x d matrix X_{t+1}, outcomes is m x 1."""
    states: Tuple[Matrix, ...]
    outcomes: Matrix

    def __post_init__(self):
        states = tuple(as_matrix(x, f"states[{i}]") for i, x in enumerate(self.states))
        if len(states) < 1:
            raise DimensionError("a dataset needs at least one state matrix")
        outcomes = as_matrix(self.outcomes, "outcomes")
        m, d = states[0].shape
        for i, x in enumerate(states):
            if x.shape != (m, d):
                raise DimensionError(f"states[{i}] has shape {x.shape}, expected ({m}, {d})", index=i)
        if outcomes.shape != (m, 1):
            raise DimensionError(f"outcomes has shape {outcomes.shape}, expected ({m}, 1)")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "outcomes", outcomes)

    @property
    def m(self) -> int:
        return self.outcomes.shape[0]

    @property
    def d(self) -> int:
        return self.states[0].shape[1]

    @property
    def horizon(self) -> int:
        return len(self.states)

    @property
    def baseline(self) -> Matrix:
        return self.states[0]

    def take(self, indices: Sequence[int]) -> "TrajectoryDataset":
        """Row subset in the given order."""
        rows = np.asarray(indices, dtype=np.intp)
        return TrajectoryDataset(
            states=tuple(x[rows] for x in self.states),
            outcomes=self.outcomes[rows],
        )

    def select_times(self, time_points: Sequence[int]) -> "TrajectoryDataset":
        """Keep only the given 1-based time points."""
        return TrajectoryDataset(
            states=tuple(self.states[t - 1] for t in time_points),
            outcomes=self.outcomes,
        )

    def concatenated(self, include_baseline: bool = True) -> Matrix:
        """m x (T d) column concatenation of the states (X1 optional)."""
        blocks: List[Matrix] = list(self.states if include_baseline else self.states[1:])
        if not blocks:
            raise DimensionError("no state blocks left to concatenate")
        return np.hstack(blocks)
