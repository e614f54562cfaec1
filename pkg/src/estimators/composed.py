"""
General composed estimator: h = g o f_{T-1} o ... o f_1 with pluggable step/outcome regressors
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Dict, Optional, Protocol, Tuple

import numpy as np

from core.regression import Matrix, solve_least_squares, solve_ridge
from safety.guards import DimensionError, ParameterError, SchemaError, as_matrix, ensure_positive, ensure_same_rows
from simulation.system import TrajectoryDataset


logger = logging.getLogger(__name__)


class RegressorKind(Enum):
    LEAST_SQUARES = "least_squares"
    RIDGE = "ridge"


@dataclass(frozen=True)
class RegressorSpec:
    """Function class used for one stage of the chain."""
    kind: RegressorKind = RegressorKind.LEAST_SQUARES
    lambda_reg: float = 0.0
    fit_intercept: bool = False

    def __post_init__(self):
        ensure_positive(self.lambda_reg, "lambda_reg", allow_zero=True)
        if self.kind is RegressorKind.LEAST_SQUARES and self.lambda_reg != 0.0:
            raise ParameterError("least_squares takes no lambda_reg", lambda_reg=self.lambda_reg)

    @classmethod
    def least_squares(cls, fit_intercept: bool = False) -> "RegressorSpec":
        return cls(RegressorKind.LEAST_SQUARES, 0.0, fit_intercept)

    @classmethod
    def ridge(cls, lambda_reg: float, fit_intercept: bool = False) -> "RegressorSpec":
        return cls(RegressorKind.RIDGE, float(lambda_reg), fit_intercept)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind.value, "lambda_reg": self.lambda_reg, "fit_intercept": self.fit_intercept}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RegressorSpec":
        try:
            kind = RegressorKind(data["kind"])
        except (KeyError, ValueError) as e:
            raise SchemaError(f"invalid regressor kind in {data}") from e
        return cls(kind, float(data.get("lambda_reg", 0.0)), bool(data.get("fit_intercept", False)))


class StageModel(Protocol):
    """Anything with a 2-D in, 2-D out predict."""

    def predict(self, inputs: Matrix) -> Matrix:
        ...


@dataclass(frozen=True, eq=False)
class LinearMap:
    """Affine map x -> x @ coefficients + intercept."""
    coefficients: Matrix
    intercept: Matrix

    def __post_init__(self):
        coefficients = as_matrix(self.coefficients, "coefficients")
        intercept = np.asarray(self.intercept, dtype=np.float64).reshape(-1)
        if intercept.shape[0] != coefficients.shape[1]:
            raise DimensionError(
                f"intercept has {intercept.shape[0]} entries, map has {coefficients.shape[1]} outputs"
            )
        object.__setattr__(self, "coefficients", coefficients)
        object.__setattr__(self, "intercept", intercept)

    @property
    def input_dim(self) -> int:
        return self.coefficients.shape[0]

    @property
    def output_dim(self) -> int:
        return self.coefficients.shape[1]

    @classmethod
    def fit(cls, design: Matrix, targets: Matrix, spec: RegressorSpec) -> "LinearMap":
        design = as_matrix(design, "design")
        targets = as_matrix(targets, "targets")
        ensure_same_rows(design, targets)
        design_mean = design.mean(axis=0) if spec.fit_intercept else np.zeros(design.shape[1])
        target_mean = targets.mean(axis=0) if spec.fit_intercept else np.zeros(targets.shape[1])
        centred_design, centred_targets = design - design_mean, targets - target_mean
        if spec.kind is RegressorKind.RIDGE:
            coefficients = solve_ridge(centred_design, centred_targets, spec.lambda_reg)
        else:
            coefficients = solve_least_squares(centred_design, centred_targets).coefficients
        return cls(coefficients=coefficients, intercept=target_mean - design_mean @ coefficients)

    def predict(self, inputs: Matrix) -> Matrix:
        inputs = as_matrix(inputs, "inputs")
        if inputs.shape[1] != self.input_dim:
            raise DimensionError(f"inputs have {inputs.shape[1]} columns, map expects {self.input_dim}")
        return inputs @ self.coefficients + self.intercept

    def to_dict(self) -> Dict[str, Any]:
        return {"coefficients": self.coefficients.tolist(), "intercept": self.intercept.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LinearMap":
        try:
            return cls(coefficients=np.array(data["coefficients"], dtype=np.float64),
                       intercept=np.array(data["intercept"], dtype=np.float64))
        except KeyError as e:
            raise SchemaError(f"linear map document is missing field {e}") from e


class EstimatorStage:
    """Adapter over a fitted scikit-learn style regressor."""

    def __init__(self, model: Any, output_dim: int):
        self.model = model
        self.output_dim = output_dim

    def predict(self, inputs: Matrix) -> Matrix:
        output = np.asarray(self.model.predict(as_matrix(inputs, "inputs")), dtype=np.float64)
        return output.reshape(-1, self.output_dim)


@dataclass(frozen=True, eq=False)
class ComposedPredictor:
    """Step maps applied in order, then the outcome map."""
    step_models: Tuple[StageModel, ...]
    outcome_model: StageModel
    step_spec: Optional[RegressorSpec] = None
    outcome_spec: Optional[RegressorSpec] = None
    estimator: str = "composed"

    def __post_init__(self):
        if len(self.step_models) < 1:
            raise ParameterError("a composed predictor needs at least one step model")
        maps = [*self.step_models, self.outcome_model]
        if all(isinstance(m, LinearMap) for m in maps):
            for i, (left, right) in enumerate(zip(maps[:-1], maps[1:])):
                if left.output_dim != right.input_dim:
                    raise DimensionError(f"stage {i} outputs {left.output_dim} but stage {i + 1} "
                                         f"expects {right.input_dim}", index=i)
            if self.outcome_model.output_dim != 1:
                raise DimensionError("outcome model must map to a single column")
        object.__setattr__(self, "step_models", tuple(self.step_models))

    @property
    def is_linear(self) -> bool:
        return all(isinstance(m, LinearMap) for m in (*self.step_models, self.outcome_model))

    def simulate(self, baseline: Matrix) -> Matrix:
        """Roll X1 forward through the fitted step maps to an estimate of X_T."""
        state = as_matrix(baseline, "baseline")
        for model in self.step_models:
            state = model.predict(state)
        return state

    def predict(self, baseline: Matrix) -> Matrix:
        return self.outcome_model.predict(self.simulate(baseline)).reshape(-1, 1)

    def to_dict(self) -> Dict[str, Any]:
        if not self.is_linear:
            raise SchemaError("only composed predictors of linear maps serialize to JSON")
        return {
            "type": "composed",
            "estimator": self.estimator,
            "step_spec": None if self.step_spec is None else self.step_spec.to_dict(),
            "outcome_spec": None if self.outcome_spec is None else self.outcome_spec.to_dict(),
            "step_models": [m.to_dict() for m in self.step_models],
            "outcome_model": self.outcome_model.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ComposedPredictor":
        try:
            return cls(
                step_models=tuple(LinearMap.from_dict(m) for m in data["step_models"]),
                outcome_model=LinearMap.from_dict(data["outcome_model"]),
                step_spec=None if data.get("step_spec") is None else RegressorSpec.from_dict(data["step_spec"]),
                outcome_spec=None if data.get("outcome_spec") is None
                else RegressorSpec.from_dict(data["outcome_spec"]),
                estimator=data.get("estimator", "composed"),
            )
        except KeyError as e:
            raise SchemaError(f"composed document is missing field {e}") from e


def fit_composed(dataset: TrajectoryDataset,
                 step_spec: RegressorSpec = RegressorSpec.least_squares(),
                 outcome_spec: RegressorSpec = RegressorSpec.least_squares(),
                 estimator: str = "composed") -> ComposedPredictor:
    """Fit f_t on (X_t, X_{t+1}) for each step and g on (X_T, Y)."""
    if dataset.horizon < 2:
        raise ParameterError("a composed estimator needs at least two time points")
    steps = tuple(
        LinearMap.fit(current, following, step_spec)
        for current, following in zip(dataset.states[:-1], dataset.states[1:])
    )
    outcome = LinearMap.fit(dataset.states[-1], dataset.outcomes, outcome_spec)
    return ComposedPredictor(step_models=steps, outcome_model=outcome,
                             step_spec=step_spec, outcome_spec=outcome_spec, estimator=estimator)


def fit_composed_with(dataset: TrajectoryDataset,
                      step_factory: Callable[[], Any],
                      outcome_factory: Callable[[], Any],
                      estimator: str = "composed_plugin") -> ComposedPredictor:
    """Same chain with arbitrary regressors exposing fit(X, y) / predict(X).

    step_factory must return a multi-output regressor (e.g. sklearn's Ridge
    or a MultiOutputRegressor wrapper); a fresh instance is made per stage.
    """
    if dataset.horizon < 2:
        raise ParameterError("a composed estimator needs at least two time points")
    steps = []
    for current, following in zip(dataset.states[:-1], dataset.states[1:]):
        model = step_factory()
        model.fit(current, following)
        steps.append(EstimatorStage(model, following.shape[1]))
    outcome_model = outcome_factory()
    outcome_model.fit(dataset.states[-1], dataset.outcomes.ravel())
    logger.debug(f"Fitted plug-in chain with {len(steps)} steps using {type(outcome_model).__name__}")
    return ComposedPredictor(step_models=tuple(steps), outcome_model=EstimatorStage(outcome_model, 1),
                             estimator=estimator)


def linear_theta(predictor: ComposedPredictor) -> Tuple[Matrix, float]:
    """Collapse a linear composed predictor into (theta, intercept)."""
    if not predictor.is_linear:
        raise ParameterError("only chains of linear maps collapse to a single theta")
    from estimators.linear import compose_chain

    return compose_chain(
        [m.coefficients for m in predictor.step_models],
        predictor.outcome_model.coefficients,
        [m.intercept for m in predictor.step_models],
        float(predictor.outcome_model.intercept[0]),
    )

