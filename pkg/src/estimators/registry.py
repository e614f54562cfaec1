"""
Estimator registry - labels, hyperparameters and a single fit/predict entry point
"""

import logging
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator
from sklearn.linear_model import LinearRegression, Ridge
from sklearn.tree import DecisionTreeRegressor

from core.regression import Matrix
from estimators.composed import ComposedPredictor, RegressorSpec, fit_composed, fit_composed_with, linear_theta
from estimators.linear import (
    DEFAULT_LAMBDA_GRID,
    ChainFit,
    DistillVariant,
    LinearPredictor,
    fit_baseline,
    fit_distill_concat,
    fit_distill_seq,
    fit_lupts,
    fit_stat_lupts,
    select_distill_lambda,
)
from safety.guards import ConfigError, DimensionError, ParameterError, as_matrix
from simulation.rng import RngStream
from simulation.system import TrajectoryDataset


logger = logging.getLogger(__name__)

Predictor = Union[LinearPredictor, ChainFit, ComposedPredictor]


class EstimatorKind(Enum):
    BASELINE = "baseline"
    LUPTS = "lupts"
    STAT_LUPTS = "stat_lupts"
    DISTILL_SEQ = "distill_seq"
    DISTILL_CONCAT = "distill_concat"
    DISTILL_SEQ_CV = "distill_seq_cv"
    DISTILL_CONCAT_CV = "distill_concat_cv"
    COMPOSED_LS = "composed_ls"
    COMPOSED_RIDGE = "composed_ridge"
    COMPOSED_PLUGIN = "composed_plugin"

    @property
    def is_distill(self) -> bool:
        return self.value.startswith("distill")

    @property
    def selects_lambda(self) -> bool:
        return self.value.endswith("_cv")


class PluginRegressor(Enum):
    """scikit-learn regressor used for every composed_plugin stage."""
    LINEAR = "linear"
    RIDGE = "ridge"
    TREE = "tree"


class EstimatorSpec(BaseModel):
    """Which estimator to fit and with which hyperparameters."""
    kind: EstimatorKind = Field(default=EstimatorKind.BASELINE, description="Estimator label")
    distill_lambda: float = Field(default=0.5, description="Weight on true labels for distillation")
    lambda_grid: List[float] = Field(default=list(DEFAULT_LAMBDA_GRID),
                                     description="Candidates for validation-split lambda selection")
    validation_fraction: float = Field(default=0.2, description="Share of training rows held out for selection")
    lambda_reg: float = Field(default=1.0, description="Ridge strength for composed_ridge")
    include_baseline: bool = Field(default=True, description="Distill-Concat teacher sees X1")
    fit_intercept: bool = Field(default=False, description="Fit intercepts in every regression")
    time_points: Optional[List[int]] = Field(default=None, description="Privileged time points used by LuPTS")
    regressor: PluginRegressor = Field(default=PluginRegressor.LINEAR,
                                       description="Stage regressor for composed_plugin")
    min_samples_leaf: int = Field(default=5, description="Leaf size of tree stages")

    model_config = {"frozen": True}

    @field_validator("distill_lambda")
    @classmethod
    def _lambda_in_unit_interval(cls, value: float) -> float:
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"distill_lambda must lie in [0, 1], got {value}")
        return value

    @field_validator("lambda_grid")
    @classmethod
    def _grid_in_unit_interval(cls, value: List[float]) -> List[float]:
        if not value or any(not 0.0 <= v <= 1.0 for v in value):
            raise ValueError("lambda_grid must be a non-empty list of values in [0, 1]")
        return value

    @field_validator("lambda_reg")
    @classmethod
    def _non_negative_ridge(cls, value: float) -> float:
        if not np.isfinite(value) or value < 0:
            raise ValueError(f"lambda_reg must be finite and >= 0, got {value}")
        return value

    @field_validator("min_samples_leaf")
    @classmethod
    def _positive_leaf(cls, value: int) -> int:
        if value < 1:
            raise ValueError(f"min_samples_leaf must be >= 1, got {value}")
        return value

    @classmethod
    def from_label(cls, label: str, **overrides: Any) -> "EstimatorSpec":
        try:
            kind = EstimatorKind(label)
        except ValueError as e:
            raise ConfigError(
                f"unknown estimator label {label!r}",
                known=[k.value for k in EstimatorKind],
            ) from e
        return cls(kind=kind, **overrides)

    @property
    def label(self) -> str:
        return self.kind.value


def known_labels() -> List[str]:
    return [kind.value for kind in EstimatorKind]


def fit_estimator(spec: EstimatorSpec,
                  dataset: TrajectoryDataset,
                  rng: Optional[RngStream] = None) -> Predictor:
    """Fit the estimator named by spec on a training dataset.

    rng only feeds the validation split of the *_cv labels.
    """
    kind = spec.kind
    if kind is EstimatorKind.BASELINE:
        return fit_baseline(dataset, spec.fit_intercept)
    if kind is EstimatorKind.LUPTS:
        return fit_lupts(dataset, spec.fit_intercept, spec.time_points)
    if kind is EstimatorKind.STAT_LUPTS:
        return fit_stat_lupts(dataset, spec.fit_intercept)
    if kind is EstimatorKind.DISTILL_SEQ:
        return fit_distill_seq(dataset, spec.distill_lambda, spec.fit_intercept)
    if kind is EstimatorKind.DISTILL_CONCAT:
        return fit_distill_concat(dataset, spec.distill_lambda, spec.include_baseline, spec.fit_intercept)
    if kind.selects_lambda:
        variant = DistillVariant.SEQ if kind is EstimatorKind.DISTILL_SEQ_CV else DistillVariant.CONCAT
        options: Dict[str, Any] = {"fit_intercept": spec.fit_intercept}
        if variant is DistillVariant.CONCAT:
            options["include_baseline"] = spec.include_baseline
        lam, scores = select_distill_lambda(dataset, variant, spec.lambda_grid,
                                            spec.validation_fraction, rng, **options)
        if variant is DistillVariant.SEQ:
            fitted = fit_distill_seq(dataset, lam, spec.fit_intercept)
        else:
            fitted = fit_distill_concat(dataset, lam, spec.include_baseline, spec.fit_intercept)
        return LinearPredictor(
            theta=fitted.theta,
            intercept=fitted.intercept,
            estimator=kind.value,
            hyperparameters={**fitted.hyperparameters, "validation_mse": {str(k): v for k, v in scores.items()}},
        )
    if kind is EstimatorKind.COMPOSED_LS:
        step = RegressorSpec.least_squares(spec.fit_intercept)
        return fit_composed(dataset, step, step, estimator=kind.value)
    if kind is EstimatorKind.COMPOSED_RIDGE:
        step = RegressorSpec.ridge(spec.lambda_reg, spec.fit_intercept)
        return fit_composed(dataset, step, step, estimator=kind.value)
    if kind is EstimatorKind.COMPOSED_PLUGIN:
        factory = plugin_factory(spec)
        return fit_composed_with(dataset, factory, factory, estimator=kind.value)
    raise ParameterError(f"no fitter registered for {kind.value}")


def plugin_factory(spec: EstimatorSpec) -> Callable[[], Any]:
    """Fresh, unfitted regressor per stage; tree stages are multi-output."""
    if spec.regressor is PluginRegressor.RIDGE:
        return lambda: Ridge(alpha=spec.lambda_reg, fit_intercept=spec.fit_intercept)
    if spec.regressor is PluginRegressor.TREE:
        return lambda: DecisionTreeRegressor(min_samples_leaf=spec.min_samples_leaf, random_state=0)
    return lambda: LinearRegression(fit_intercept=spec.fit_intercept)


def predict(predictor: Predictor, baseline: Matrix) -> Matrix:
    """m x 1 predictions from the baseline features X1 alone."""
    baseline = as_matrix(baseline, "baseline")
    if isinstance(predictor, (LinearPredictor, ChainFit, ComposedPredictor)):
        return predictor.predict(baseline)
    raise DimensionError(f"cannot predict with {type(predictor).__name__}")


def effective_theta(predictor: Predictor) -> Optional[LinearPredictor]:
    """The baseline-feature weight vector, when the predictor is linear."""
    if isinstance(predictor, LinearPredictor):
        return predictor
    if isinstance(predictor, ChainFit):
        return predictor.composed
    if isinstance(predictor, ComposedPredictor) and predictor.is_linear:
        theta, intercept = linear_theta(predictor)
        return LinearPredictor(theta=theta, intercept=intercept, estimator=predictor.estimator)
    return None
