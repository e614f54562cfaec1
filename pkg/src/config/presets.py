"""
Canonical experiment presets for the synthetic studies

Defaults: d=25, T=10, kappa=1.5, sigma=sigma_Y=1, X1 ~ N(0, 5), n=1000,
m_test=1000 and 200 replicates.
"""

import logging
from typing import Any, Callable, Dict, List, Optional

from config.experiment import ExperimentConfig, SweepAxis
from safety.guards import UnknownPresetError


logger = logging.getLogger(__name__)

DEFAULT_REPLICATES = 200


def _base(name: str, axis: SweepAxis, values: List[float], **overrides: Any) -> Dict[str, Any]:
    config: Dict[str, Any] = {
        "name": name,
        "system": {},
        "sweep": {"axis": axis.value, "values": values},
        "n": 1000,
        "m_test": 1000,
        "replicates": DEFAULT_REPLICATES,
        "estimators": ["baseline", "lupts"],
    }
    config.update(overrides)
    return config


def _fig2a_samples() -> Dict[str, Any]:
    return _base("fig2a_samples", SweepAxis.N, [100, 200, 500, 1000, 2000])


def _fig2b_length() -> Dict[str, Any]:
    return _base("fig2b_length", SweepAxis.T, [2, 4, 6, 8, 10, 15, 20])


def _fig2c_noise() -> Dict[str, Any]:
    # sigma sweeps the dynamics noise only; sigma_Y stays at its default
    return _base("fig2c_noise", SweepAxis.SIGMA, [0.0, 0.25, 0.5, 1.0, 1.5, 2.0])


def _fig2d_markov() -> Dict[str, Any]:
    return _base("fig2d_markov", SweepAxis.DELTA_RATIO, [0.0, 0.05, 0.1, 0.2, 0.4, 0.8, 1.6])


def _fig6_stationary() -> Dict[str, Any]:
    return _base(
        "fig6_stationary", SweepAxis.N, [100, 200, 500, 1000, 2000],
        system={"stationary": True},
        estimators=["baseline", "lupts", "stat_lupts"],
    )


def _fig6_nonstationary() -> Dict[str, Any]:
    return _base(
        "fig6_nonstationary", SweepAxis.N, [100, 200, 500, 1000, 2000],
        system={"stationary": False},
        estimators=["baseline", "lupts", "stat_lupts"],
    )


def _distill_sandwich() -> Dict[str, Any]:
    return _base(
        "distill_sandwich", SweepAxis.LAMBDA, [0.0, 0.25, 0.5, 0.75, 1.0],
        n=200,
        estimators=["baseline", "lupts", "distill_seq"],
    )


def _riskbound_check() -> Dict[str, Any]:
    return _base(
        "riskbound_check", SweepAxis.N, [100, 1000],
        m_test=100000,
        replicates=20,
        estimators=[
            "lupts",
            {"kind": "composed_ridge", "lambda_reg": 10.0},
            {"kind": "composed_plugin", "regressor": "tree"},
        ],
        evaluate_risk_terms=True,
    )


PRESETS: Dict[str, Callable[[], Dict[str, Any]]] = {
    "fig2a_samples": _fig2a_samples,
    "fig2b_length": _fig2b_length,
    "fig2c_noise": _fig2c_noise,
    "fig2d_markov": _fig2d_markov,
    "fig6_stationary": _fig6_stationary,
    "fig6_nonstationary": _fig6_nonstationary,
    "distill_sandwich": _distill_sandwich,
    "riskbound_check": _riskbound_check,
}

PRESET_DESCRIPTIONS: Dict[str, str] = {
    "fig2a_samples": "relative MSE vs training size n",
    "fig2b_length": "relative MSE vs sequence length T",
    "fig2c_noise": "relative MSE vs dynamics noise sigma",
    "fig2d_markov": "R² vs Markov-violation ratio ||delta||/||beta||",
    "fig6_stationary": "stationary systems: baseline, LuPTS and Stat-LuPTS vs n",
    "fig6_nonstationary": "time-varying systems: Stat-LuPTS misspecified, vs n",
    "distill_sandwich": "Distill-Seq between LuPTS and OLS as lambda sweeps 0..1",
    "riskbound_check": "risk-expansion terms for chain estimators",
}


def preset_names() -> List[str]:
    return list(PRESETS)


def preset(name: str, **overrides: Any) -> ExperimentConfig:
    """Canonical config for a named study; overrides replace top-level fields."""
    factory = PRESETS.get(name)
    if factory is None:
        raise UnknownPresetError(f"unknown preset {name!r}", known=preset_names())
    data = factory()
    data.update({key: value for key, value in overrides.items() if value is not None})
    return ExperimentConfig.from_dict(data)


def describe_presets() -> Dict[str, Optional[str]]:
    return {name: PRESET_DESCRIPTIONS.get(name) for name in PRESETS}
