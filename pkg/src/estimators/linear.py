"""
Linear estimators: baseline OLS, LuPTS, Stat-LuPTS and the distillation variants
"""

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.regression import Matrix, matrix_chain_product, matrix_power, solve_least_squares
from safety.guards import (
    DimensionError,
    ParameterError,
    SchemaError,
    as_matrix,
    ensure_same_rows,
    ensure_unit_interval,
)
from simulation.rng import RngStream
from simulation.system import TrajectoryDataset


logger = logging.getLogger(__name__)

DEFAULT_LAMBDA_GRID = (0.25, 0.5, 0.75)


class DistillVariant(Enum):
    """Which teacher produces the soft targets."""
    SEQ = "seq"
    CONCAT = "concat"


@dataclass(frozen=True, eq=False)
class LinearPredictor:
    """Baseline-only predictor y = x1' theta + intercept."""
    theta: Matrix
    intercept: float = 0.0
    estimator: str = "linear"
    hyperparameters: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        theta = as_matrix(self.theta, "theta")
        if theta.shape[1] != 1:
            raise DimensionError(f"theta must be a column vector, got shape {theta.shape}")
        if not np.isfinite(self.intercept):
            raise ParameterError("intercept must be finite")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "intercept", float(self.intercept))

    @property
    def d(self) -> int:
        return self.theta.shape[0]

    def predict(self, baseline: Matrix) -> Matrix:
        baseline = as_matrix(baseline, "baseline")
        if baseline.shape[1] != self.d:
            raise DimensionError(f"baseline has {baseline.shape[1]} columns, predictor expects {self.d}")
        return baseline @ self.theta + self.intercept

    def to_dict(self) -> Dict[str, Any]:
        return {
            "type": "linear",
            "estimator": self.estimator,
            "hyperparameters": dict(self.hyperparameters),
            "theta": self.theta[:, 0].tolist(),
            "intercept": self.intercept,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LinearPredictor":
        try:
            return cls(
                theta=np.array(data["theta"], dtype=np.float64).reshape(-1, 1),
                intercept=data.get("intercept", 0.0),
                estimator=data.get("estimator", "linear"),
                hyperparameters=dict(data.get("hyperparameters", {})),
            )
        except KeyError as e:
            raise SchemaError(f"predictor document is missing field {e}") from e


@dataclass(frozen=True, eq=False)
class ChainFit:
    """Per-step transitions, outcome weights and their composition."""
    step_coefficients: Tuple[Matrix, ...]
    outcome_coefficients: Matrix
    composed: LinearPredictor
    step_intercepts: Optional[Tuple[Matrix, ...]] = None
    outcome_intercept: float = 0.0
    time_points: Optional[Tuple[int, ...]] = None

    @property
    def theta(self) -> Matrix:
        return self.composed.theta

    def predict(self, baseline: Matrix) -> Matrix:
        return self.composed.predict(baseline)

    def as_composed(self):
        """The same chain as a ComposedPredictor of linear maps."""
        from estimators.composed import ComposedPredictor, LinearMap, RegressorSpec

        d = self.outcome_coefficients.shape[0]
        intercepts = self.step_intercepts or tuple(np.zeros(d) for _ in self.step_coefficients)
        steps = tuple(
            LinearMap(coefficients=coef, intercept=np.asarray(c).reshape(-1))
            for coef, c in zip(self.step_coefficients, intercepts)
        )
        outcome = LinearMap(coefficients=self.outcome_coefficients, intercept=np.array([self.outcome_intercept]))
        return ComposedPredictor(
            step_models=steps,
            outcome_model=outcome,
            step_spec=RegressorSpec.least_squares(),
            outcome_spec=RegressorSpec.least_squares(),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "type": "chain",
            "step_coefficients": [a.tolist() for a in self.step_coefficients],
            "outcome_coefficients": self.outcome_coefficients[:, 0].tolist(),
            "step_intercepts": None if self.step_intercepts is None
            else [np.asarray(c).reshape(-1).tolist() for c in self.step_intercepts],
            "outcome_intercept": self.outcome_intercept,
            "time_points": None if self.time_points is None else list(self.time_points),
            "composed": self.composed.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ChainFit":
        try:
            intercepts = data.get("step_intercepts")
            time_points = data.get("time_points")
            return cls(
                step_coefficients=tuple(np.array(a, dtype=np.float64) for a in data["step_coefficients"]),
                outcome_coefficients=np.array(data["outcome_coefficients"], dtype=np.float64).reshape(-1, 1),
                composed=LinearPredictor.from_dict(data["composed"]),
                step_intercepts=None if intercepts is None else tuple(np.array(c) for c in intercepts),
                outcome_intercept=float(data.get("outcome_intercept", 0.0)),
                time_points=None if time_points is None else tuple(time_points),
            )
        except KeyError as e:
            raise SchemaError(f"chain document is missing field {e}") from e


def fit_affine(design: Matrix, targets: Matrix, fit_intercept: bool = False) -> Tuple[Matrix, Matrix]:
    """Least-squares coefficients and intercept row for targets ~ design.

    Intercepts are fitted by centring both sides; without them the
    intercept row is zero.
    """
    design = as_matrix(design, "design")
    targets = as_matrix(targets, "targets")
    ensure_same_rows(design, targets)
    if not fit_intercept:
        coefficients = solve_least_squares(design, targets).coefficients
        return coefficients, np.zeros(targets.shape[1])
    design_mean = design.mean(axis=0)
    target_mean = targets.mean(axis=0)
    coefficients = solve_least_squares(design - design_mean, targets - target_mean).coefficients
    return coefficients, target_mean - design_mean @ coefficients


def compose_chain(step_coefficients: Sequence[Matrix],
                  outcome_coefficients: Matrix,
                  step_intercepts: Optional[Sequence[Matrix]] = None,
                  outcome_intercept: float = 0.0) -> Tuple[Matrix, float]:
    """Collapse x -> x A_1 + c_1 -> ... -> x beta + b into (theta, intercept)."""
    theta = matrix_chain_product(list(step_coefficients)) @ outcome_coefficients
    intercept = float(outcome_intercept)
    if step_intercepts is not None:
        weights = outcome_coefficients
        for coef, c in zip(reversed(step_coefficients), reversed(step_intercepts)):
            intercept += float(np.asarray(c).reshape(-1) @ weights[:, 0])
            weights = coef @ weights
    return theta, intercept


def _check_time_points(time_points: Optional[Sequence[int]], horizon: int) -> Tuple[int, ...]:
    if time_points is None:
        return tuple(range(1, horizon + 1))
    points = tuple(int(t) for t in time_points)
    if len(points) < 2 or points[0] != 1 or points[-1] != horizon \
            or any(b <= a for a, b in zip(points, points[1:])):
        raise ParameterError(
            f"time_points must increase strictly from 1 to T={horizon}, got {list(points)}",
            time_points=list(points),
        )
    return points


def fit_baseline(dataset: TrajectoryDataset, fit_intercept: bool = False) -> LinearPredictor:
    """OLS of Y on X1; privileged states are ignored."""
    coefficients, intercept = fit_affine(dataset.baseline, dataset.outcomes, fit_intercept)
    return LinearPredictor(
        theta=coefficients,
        intercept=float(intercept[0]),
        estimator="baseline",
        hyperparameters={"fit_intercept": fit_intercept},
    )


def fit_lupts(dataset: TrajectoryDataset,
              fit_intercept: bool = False,
              time_points: Optional[Sequence[int]] = None) -> ChainFit:
    """Non-stationary LuPTS: regress X_{t+1} on X_t per step, Y on X_T, compose.

    time_points restricts the chain to a subset of privileged time points.
    """
    if dataset.horizon < 2:
        raise ParameterError("LuPTS needs at least two time points")
    points = _check_time_points(time_points, dataset.horizon)
    chain = dataset.select_times(points)

    step_coefficients: List[Matrix] = []
    step_intercepts: List[Matrix] = []
    for current, following in zip(chain.states[:-1], chain.states[1:]):
        coef, c = fit_affine(current, following, fit_intercept)
        step_coefficients.append(coef)
        step_intercepts.append(c)
    beta, b = fit_affine(chain.states[-1], chain.outcomes, fit_intercept)

    theta, intercept = compose_chain(step_coefficients, beta,
                                     step_intercepts if fit_intercept else None, float(b[0]))
    hyperparameters: Dict[str, Any] = {"fit_intercept": fit_intercept}
    if time_points is not None:
        hyperparameters["time_points"] = list(points)
    return ChainFit(
        step_coefficients=tuple(step_coefficients),
        outcome_coefficients=beta,
        composed=LinearPredictor(theta=theta, intercept=intercept, estimator="lupts",
                                 hyperparameters=hyperparameters),
        step_intercepts=tuple(step_intercepts) if fit_intercept else None,
        outcome_intercept=float(b[0]),
        time_points=points if time_points is not None else None,
    )


def fit_stat_lupts(dataset: TrajectoryDataset, fit_intercept: bool = False) -> ChainFit:
    """Stationary LuPTS: one transition fitted on all pooled (X_t, X_{t+1}) pairs."""
    if dataset.horizon < 2:
        raise ParameterError("Stat-LuPTS needs at least two time points")
    pooled_design = np.vstack(dataset.states[:-1])
    pooled_targets = np.vstack(dataset.states[1:])
    shared, c = fit_affine(pooled_design, pooled_targets, fit_intercept)
    beta, b = fit_affine(dataset.states[-1], dataset.outcomes, fit_intercept)

    steps = dataset.horizon - 1
    step_coefficients = tuple(shared for _ in range(steps))
    if fit_intercept:
        theta, intercept = compose_chain(step_coefficients, beta, [c] * steps, float(b[0]))
    else:
        theta, intercept = matrix_power(shared, steps) @ beta, float(b[0])
    return ChainFit(
        step_coefficients=step_coefficients,
        outcome_coefficients=beta,
        composed=LinearPredictor(theta=theta, intercept=intercept, estimator="stat_lupts",
                                 hyperparameters={"fit_intercept": fit_intercept}),
        step_intercepts=tuple(c for _ in range(steps)) if fit_intercept else None,
        outcome_intercept=float(b[0]),
    )


def distill_student(baseline: Matrix, labels: Matrix, soft_targets: Matrix, lam: float,
                    fit_intercept: bool = False) -> Tuple[Matrix, float]:
    """Minimiser of lam ||Y - X1 theta||^2 + (1 - lam) ||Y_soft - X1 theta||^2.

    Both squared terms share the design, so the minimiser is the least-squares
    fit to the blended target lam Y + (1 - lam) Y_soft.
    """
    lam = ensure_unit_interval(lam, "lambda")
    blended = lam * labels + (1.0 - lam) * soft_targets
    coefficients, intercept = fit_affine(baseline, blended, fit_intercept)
    return coefficients, float(intercept[0])


def fit_distill_seq(dataset: TrajectoryDataset, lam: float, fit_intercept: bool = False) -> LinearPredictor:
    """Distillation with the LuPTS teacher, in closed form.

    With Y_soft = X1 theta_LuPTS the student equals the convex combination
    lam theta_OLS + (1 - lam) theta_LuPTS.
    """
    lam = ensure_unit_interval(lam, "lambda")
    ols = fit_baseline(dataset, fit_intercept)
    lupts = fit_lupts(dataset, fit_intercept).composed
    return LinearPredictor(
        theta=lam * ols.theta + (1.0 - lam) * lupts.theta,
        intercept=lam * ols.intercept + (1.0 - lam) * lupts.intercept,
        estimator="distill_seq",
        hyperparameters={"lambda": lam, "fit_intercept": fit_intercept},
    )


def fit_distill_concat(dataset: TrajectoryDataset,
                       lam: float,
                       include_baseline: bool = True,
                       fit_intercept: bool = False) -> LinearPredictor:
    """Distillation with a teacher fitted on the concatenated time points."""
    lam = ensure_unit_interval(lam, "lambda")
    teacher_design = dataset.concatenated(include_baseline=include_baseline)
    teacher_coef, teacher_intercept = fit_affine(teacher_design, dataset.outcomes, fit_intercept)
    soft_targets = teacher_design @ teacher_coef + teacher_intercept
    theta, intercept = distill_student(dataset.baseline, dataset.outcomes, soft_targets, lam, fit_intercept)
    return LinearPredictor(
        theta=theta,
        intercept=intercept,
        estimator="distill_concat",
        hyperparameters={"lambda": lam, "include_baseline": include_baseline, "fit_intercept": fit_intercept},
    )


def fit_distill(dataset: TrajectoryDataset, variant: DistillVariant, lam: float, **options: Any) -> LinearPredictor:
    if variant is DistillVariant.SEQ:
        return fit_distill_seq(dataset, lam, fit_intercept=options.get("fit_intercept", False))
    return fit_distill_concat(dataset, lam, **options)


def select_distill_lambda(dataset: TrajectoryDataset,
                          variant: DistillVariant = DistillVariant.SEQ,
                          grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
                          validation_fraction: float = 0.2,
                          rng: Optional[RngStream] = None,
                          **options: Any) -> Tuple[float, Dict[float, float]]:
    """Pick lambda by validation MSE on a held-out share of the training rows."""
    if not grid:
        raise ParameterError("lambda grid is empty")
    if not 0.0 < validation_fraction < 1.0:
        raise ParameterError(f"validation_fraction must lie in (0, 1), got {validation_fraction}")
    n_validation = int(round(dataset.m * validation_fraction))
    if n_validation < 1 or dataset.m - n_validation < 1:
        raise ParameterError(f"cannot hold out {validation_fraction:.0%} of {dataset.m} rows for validation")

    order = (rng or RngStream(0)).generator().permutation(dataset.m)
    validation, fitting = dataset.take(order[:n_validation]), dataset.take(order[n_validation:])

    scores: Dict[float, float] = {}
    for lam in grid:
        predictor = fit_distill(fitting, variant, lam, **options)
        residual = predictor.predict(validation.baseline) - validation.outcomes
        scores[float(lam)] = float(np.mean(residual ** 2))
    best = min(scores, key=scores.get)
    logger.debug(f"Selected lambda={best} for distill_{variant.value} from {scores}")
    return best, scores


def predictor_from_json(text: str):
    """Rebuild a serialized LinearPredictor, ChainFit or ComposedPredictor."""
    data = json.loads(text)
    kind = data.get("type")
    if kind == "linear":
        return LinearPredictor.from_dict(data)
    if kind == "chain":
        return ChainFit.from_dict(data)
    if kind == "composed":
        from estimators.composed import ComposedPredictor
        return ComposedPredictor.from_dict(data)
    raise SchemaError(f"unknown predictor type {kind!r}")
