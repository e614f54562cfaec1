"""
Experiment Controller - seeded sweeps over generated systems
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from analytics.metrics import (
    MetricRecord,
    empirical_risk,
    mse_gap,
    r_squared,
    relative_parameter_mse,
    risk_expansion_terms,
)
from analytics.results import ResultTable, write_results
from config.experiment import ExperimentConfig
from config.settings import Settings
from estimators.composed import ComposedPredictor
from estimators.linear import ChainFit, LinearPredictor, fit_baseline, fit_lupts
from estimators.registry import EstimatorKind, EstimatorSpec, Predictor, effective_theta, fit_estimator
from safety.guards import PrivilegedTSError
from simulation.rng import SELECTION_STREAM, SYSTEM_STREAM, TEST_STREAM, TRAIN_STREAM, RngStream
from simulation.synth import generate_system, sample_trajectories, scale_markov_violation, true_theta
from simulation.system import SystemSpec, TrajectoryDataset


CELL_ERRORS = (PrivilegedTSError, np.linalg.LinAlgError, ValueError, FloatingPointError)

logger = logging.getLogger(__name__)


def describe_error(error: BaseException) -> str:
    """Short error tag stored on failed records."""
    if isinstance(error, PrivilegedTSError):
        return f"{error.kind.value}: {error.message}"
    return f"{type(error).__name__}: {error}"


def replicate_gap(specs: List[EstimatorSpec], fitted: Dict[str, Predictor],
                  train: TrajectoryDataset) -> Optional[float]:
    """||theta_OLS - theta_LuPTS||^2 on one training set.

    Reuses the fitted baseline and LuPTS when they were run with default
    options, otherwise fits them here.
    """
    defaults: Dict[EstimatorKind, Optional[Predictor]] = {EstimatorKind.BASELINE: None, EstimatorKind.LUPTS: None}
    for spec in specs:
        if spec.kind in defaults and not spec.fit_intercept and spec.time_points is None:
            defaults[spec.kind] = fitted.get(spec.label)
    try:
        ols = defaults[EstimatorKind.BASELINE] or fit_baseline(train)
        lupts = defaults[EstimatorKind.LUPTS] or fit_lupts(train)
        return mse_gap(ols, lupts)
    except CELL_ERRORS as e:
        logger.debug(f"Gap unavailable: {describe_error(e)}")
        return None


@dataclass
class ReplicateData:
    """Everything one replicate draws before fitting."""
    spec: SystemSpec
    truth: LinearPredictor
    train: TrajectoryDataset
    test: TrajectoryDataset


class ExperimentController:
    """Runs an ExperimentConfig and collects one MetricRecord per (value, replicate, estimator)."""

    def __init__(self, config: ExperimentConfig, settings: Optional[Settings] = None):
        self.config = config
        self.settings = settings
        self.logger = logging.getLogger(__name__)
        self.workers = config.workers
        if settings is not None and config.workers == 1:
            self.workers = max(1, settings.runtime.workers)

        self.stats = {
            "replicates_run": 0,
            "cells_run": 0,
            "cells_failed": 0,
            "start_time": 0.0,
            "elapsed": 0.0,
        }

    def stream_for(self, sweep_index: int, replicate: int) -> RngStream:
        return RngStream(self.config.master_seed, sweep_index * self.config.replicates + replicate)

    def run(self) -> ResultTable:
        """Run every (sweep value, replicate) cell and merge in canonical order."""
        config = self.config
        jobs = [
            (sweep_index, float(config.sweep.values[sweep_index]), replicate)
            for sweep_index, replicate, _ in replicate_keys(config)
        ]
        self.stats["start_time"] = time.time()
        self.logger.info(
            f"🚀 Running {config.name}: {config.sweep.axis.value} over {config.sweep.values}, "
            f"{config.replicates} replicates, estimators {[s.label for s in config.estimators]}"
        )

        if self.workers > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                batches = list(pool.map(lambda job: self.run_replicate(*job), jobs))
        else:
            batches = [self.run_replicate(*job) for job in jobs]

        records = [record for batch in batches for record in batch]
        self.stats["replicates_run"] = len(jobs)
        self.stats["cells_run"] = len(records)
        self.stats["cells_failed"] = sum(1 for r in records if r.failed)
        self.stats["elapsed"] = time.time() - self.stats["start_time"]

        echo = config.to_dict()
        echo["fingerprint"] = config.fingerprint()
        table = ResultTable(records=records, config=echo)

        if self.stats["cells_failed"]:
            self.logger.warning(f"⚠️ {self.stats['cells_failed']} of {len(records)} cells failed and were excluded")
        self.logger.info(f"✅ {config.name} finished: {len(records)} records in {self.stats['elapsed']:.1f}s")

        if config.output:
            write_results(table, config.output)
        return table

    def draw_replicate(self, sweep_index: int, axis_value: float, replicate: int) -> ReplicateData:
        """Generate the system and the train/test datasets of one replicate."""
        config = self.config
        stream = self.stream_for(sweep_index, replicate)
        system_stream = (self.stream_for(sweep_index, 0) if config.fix_system else stream).child(SYSTEM_STREAM)

        system = config.system_at(axis_value)
        spec = generate_system(
            d=system.d,
            T=system.T,
            kappa=system.kappa,
            entry_std=system.entry_std,
            noise_scales=system.sigma,
            sigma_Y=system.sigma_Y,
            initial_state=system.initial_state,
            stationary=system.stationary,
            rng=system_stream,
        )
        if system.delta_ratio is not None:
            spec = scale_markov_violation(spec, system.delta_ratio)

        truth = true_theta(spec)
        if spec.markov_violation is not None:
            # best baseline-only predictor picks up the direct X1 -> Y path too
            truth = LinearPredictor(theta=truth.theta + spec.markov_violation, estimator="truth")

        train = sample_trajectories(spec, config.n_at(axis_value), stream.child(TRAIN_STREAM))
        test = sample_trajectories(spec, config.m_test, stream.child(TEST_STREAM))
        return ReplicateData(spec=spec, truth=truth, train=train, test=test)

    def run_replicate(self, sweep_index: int, axis_value: float, replicate: int) -> List[MetricRecord]:
        config = self.config
        stream = self.stream_for(sweep_index, replicate)
        specs = config.estimators_at(axis_value)
        base = {
            "seed": stream.seed64,
            "n": config.n_at(axis_value),
            "axis_name": config.sweep.axis.value,
            "axis_value": axis_value,
            "replicate": replicate,
            "stream": stream.stream_index,
        }

        try:
            data = self.draw_replicate(sweep_index, axis_value, replicate)
        except CELL_ERRORS as e:
            system = config.system_at(axis_value)
            tag = describe_error(e)
            self.logger.warning(f"⚠️ Replicate {replicate} at {base['axis_name']}={axis_value} failed: {tag}")
            return [MetricRecord(estimator=s.label, T=system.T, d=system.d, error=tag, **base) for s in specs]

        fitted: Dict[str, Predictor] = {}
        records = []
        for spec in specs:
            record, predictor = self._evaluate(spec, data, stream, base)
            records.append(record)
            if predictor is not None:
                fitted[spec.label] = predictor

        gap = replicate_gap(specs, fitted, data.train)
        for record in records:
            record.gap = gap
        return records

    def _evaluate(self, spec: EstimatorSpec, data: ReplicateData, stream: RngStream,
                  base: Dict[str, Any]) -> Tuple[MetricRecord, Optional[Predictor]]:
        try:
            predictor = fit_estimator(spec, data.train, stream.child(SELECTION_STREAM))
            theta = effective_theta(predictor)
            extra: Dict[str, Any] = {}
            relative = None
            if theta is not None:
                relative = relative_parameter_mse(theta, data.truth)
                extra["squared_error"] = float(np.sum((theta.theta - data.truth.theta) ** 2))
            score = None
            if data.test.m >= 2 and not np.all(data.test.outcomes == data.test.outcomes[0, 0]):
                score = r_squared(predictor.predict(data.test.baseline), data.test.outcomes)
            if self.config.evaluate_risk_terms and isinstance(predictor, (ChainFit, ComposedPredictor)):
                extra.update(risk_expansion_terms(predictor, data.test).as_extra())
            record = MetricRecord(
                estimator=spec.label,
                T=data.train.horizon,
                d=data.train.d,
                relative_mse=relative,
                r_squared=score,
                empirical_risk=empirical_risk(predictor, data.test),
                extra=extra,
                **base,
            )
            self.logger.debug(f"{spec.label} @ {base['axis_name']}={base['axis_value']} "
                              f"r{base['replicate']}: relative_mse={relative}")
            return record, predictor
        except CELL_ERRORS as e:
            tag = describe_error(e)
            self.logger.warning(f"⚠️ {spec.label} failed at {base['axis_name']}={base['axis_value']} "
                                f"replicate {base['replicate']}: {tag}")
            return MetricRecord(estimator=spec.label, T=data.train.horizon, d=data.train.d, error=tag, **base), None

    def get_status(self) -> Dict[str, Any]:
        return {
            "name": self.config.name,
            "fingerprint": self.config.fingerprint(),
            "workers": self.workers,
            **self.stats,
        }


def run_experiment(config: ExperimentConfig, settings: Optional[Settings] = None) -> ResultTable:
    """Run a config end to end; writes results when config.output is set."""
    return ExperimentController(config, settings).run()


def replicate_keys(config: ExperimentConfig) -> List[Tuple[int, int, int]]:
    """(sweep index, replicate, stream index) of every replicate, in canonical order."""
    return [
        (sweep_index, replicate, sweep_index * config.replicates + replicate)
        for sweep_index in range(len(config.sweep.values))
        for replicate in range(config.replicates)
    ]
