"""
Evaluation metrics: parameter recovery, R², held-out risk, MSE gap and the risk-expansion check
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Optional, Union

import numpy as np
from sklearn.metrics import mean_squared_error, r2_score

from core.regression import Matrix
from estimators.composed import ComposedPredictor
from estimators.linear import ChainFit, LinearPredictor
from estimators.registry import Predictor, predict
from safety.guards import DimensionError, NonFiniteError, ParameterError, as_matrix, ensure_same_rows
from simulation.system import TrajectoryDataset


logger = logging.getLogger(__name__)


@dataclass
class MetricRecord:
    """One (sweep value, replicate, estimator) evaluation."""
    estimator: str
    seed: int
    n: int
    T: int
    d: int
    relative_mse: Optional[float] = None
    r_squared: Optional[float] = None
    empirical_risk: Optional[float] = None
    gap: Optional[float] = None
    axis_name: str = ""
    axis_value: float = 0.0
    replicate: int = 0
    stream: int = 0
    error: str = ""
    extra: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.relative_mse is not None and self.relative_mse < 0:
            raise ParameterError(f"relative_mse must be >= 0, got {self.relative_mse}")
        for name in ("relative_mse", "r_squared", "empirical_risk", "gap"):
            value = getattr(self, name)
            if value is not None and not math.isfinite(value):
                raise NonFiniteError(f"{name} is not finite", estimator=self.estimator)

    @property
    def failed(self) -> bool:
        return bool(self.error)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _theta(value: Union[LinearPredictor, ChainFit]) -> Matrix:
    return value.theta


def relative_parameter_mse(estimate: Union[LinearPredictor, ChainFit],
                           truth: Union[LinearPredictor, ChainFit]) -> float:
    """||theta_hat - theta||^2 / ||theta||^2."""
    estimated, true = _theta(estimate), _theta(truth)
    if estimated.shape != true.shape:
        raise DimensionError(f"estimate has shape {estimated.shape}, truth has {true.shape}")
    denominator = float(np.sum(true ** 2))
    if denominator == 0.0:
        raise ParameterError("relative MSE is undefined for a zero-norm truth")
    return float(np.sum((estimated - true) ** 2)) / denominator


def r_squared(predictions: Matrix, actuals: Matrix) -> float:
    """Coefficient of determination against the mean of actuals."""
    predictions = as_matrix(predictions, "predictions")
    actuals = as_matrix(actuals, "actuals")
    ensure_same_rows(predictions, actuals, "predictions", "actuals")
    if actuals.shape[0] < 2:
        raise ParameterError("R² needs at least two rows")
    if np.all(actuals == actuals[0, 0]):
        raise ParameterError("R² is undefined for constant actuals")
    return float(r2_score(actuals.ravel(), predictions.ravel()))


def empirical_risk(predictor: Predictor, test: TrajectoryDataset) -> float:
    """Held-out mean squared error using X1 only."""
    predictions = predict(predictor, test.baseline)
    return float(mean_squared_error(test.outcomes.ravel(), predictions.ravel()))


def mse_gap(theta_ols: Union[LinearPredictor, ChainFit], theta_lupts: Union[LinearPredictor, ChainFit]) -> float:
    """Per-dataset ||theta_OLS - theta_LuPTS||^2; its replicate mean estimates G."""
    left, right = _theta(theta_ols), _theta(theta_lupts)
    if left.shape != right.shape:
        raise DimensionError(f"estimates have shapes {left.shape} and {right.shape}")
    return float(np.sum((left - right) ** 2))


@dataclass(frozen=True)
class RiskExpansionTerms:
    r_total: float
    r_dynamics: float
    r_outcome: float
    r_total_stderr: float = 0.0

    @property
    def bound(self) -> float:
        return self.r_dynamics + self.r_outcome + 2.0 * math.sqrt(self.r_dynamics * self.r_outcome)

    def holds(self, allowance: float = 5.0) -> bool:
        """Bound check with allowance standard errors of Monte Carlo slack."""
        return self.r_total <= self.bound + allowance * self.r_total_stderr

    def as_extra(self) -> Dict[str, float]:
        return {
            "r_total": self.r_total,
            "r_dynamics": self.r_dynamics,
            "r_outcome": self.r_outcome,
            "r_bound": self.bound,
            "r_total_stderr": self.r_total_stderr,
        }


def risk_expansion_terms(composed: Union[ComposedPredictor, ChainFit], test: TrajectoryDataset) -> RiskExpansionTerms:
    """Held-out total, dynamics-simulation and outcome-model risks of a composed predictor."""
    if isinstance(composed, ChainFit):
        composed = composed.as_composed()
    if test.horizon < 2:
        raise ParameterError("risk expansion needs the intermediate states of the test set")

    chained = composed.predict(test.baseline)
    direct = composed.outcome_model.predict(test.states[-1]).reshape(-1, 1)
    total_losses = (test.outcomes - chained).ravel() ** 2
    m = total_losses.shape[0]
    stderr = float(np.std(total_losses, ddof=1) / math.sqrt(m)) if m > 1 else 0.0
    return RiskExpansionTerms(
        r_total=float(np.mean(total_losses)),
        r_dynamics=float(mean_squared_error(direct.ravel(), chained.ravel())),
        r_outcome=float(mean_squared_error(test.outcomes.ravel(), direct.ravel())),
        r_total_stderr=stderr,
    )
