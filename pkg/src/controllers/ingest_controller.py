"""
Ingest Controller - estimator evaluation on an external trajectory CSV
"""

import json
import logging
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from analytics.metrics import MetricRecord, empirical_risk, r_squared
from analytics.results import ResultTable, write_results
from config.experiment import IngestConfig
from controllers.experiment_controller import CELL_ERRORS, describe_error, replicate_gap
from estimators.registry import Predictor, fit_estimator
from interfaces.dataio import (
    TrajectoryTable,
    apply_preprocess,
    fit_preprocess,
    load_trajectory_csv,
    split_rows,
    subsample_rows,
)
from safety.guards import ParameterError, ResultsIOError
from simulation.rng import SELECTION_STREAM, SPLIT_STREAM, TRAIN_STREAM, RngStream
from simulation.system import TrajectoryDataset


class IngestController:
    """One fixed train/test split, then seeded training subsamples of each size.

    Preprocessing is refitted on every subsample and applied to the test
    split with the subsample's statistics.
    """

    def __init__(self, config: IngestConfig):
        self.config = config
        self.logger = logging.getLogger(__name__)
        self.table: Optional[TrajectoryTable] = None

        self.stats = {
            "rows_loaded": 0,
            "train_pool": 0,
            "test_rows": 0,
            "cells_run": 0,
            "cells_failed": 0,
            "elapsed": 0.0,
        }

    def load(self) -> Tuple[TrajectoryTable, TrajectoryTable]:
        config = self.config
        self.table = load_trajectory_csv(config.csv_path, config.data_schema)
        split_stream = RngStream(config.master_seed).child(SPLIT_STREAM)
        train_pool, test = split_rows(self.table, 1.0 - config.test_fraction, split_stream)
        too_large = [size for size in config.train_sizes if size > train_pool.m]
        if too_large:
            raise ParameterError(
                f"train sizes {too_large} exceed the {train_pool.m} rows available for training",
                train_sizes=too_large, available=train_pool.m,
            )
        self.stats.update(rows_loaded=self.table.m, train_pool=train_pool.m, test_rows=test.m)
        return train_pool, test

    def run(self) -> ResultTable:
        config = self.config
        start = time.time()
        train_pool, test = self.load()
        self.logger.info(
            f"🚀 Ingest {config.name}: {train_pool.m} training / {test.m} test rows, "
            f"sizes {config.train_sizes}, {config.replicates} replicates"
        )

        records: List[MetricRecord] = []
        for size_index, size in enumerate(config.train_sizes):
            for replicate in range(config.replicates):
                stream = RngStream(config.master_seed, size_index * config.replicates + replicate)
                records.extend(self.run_replicate(train_pool, test, size, replicate, stream))

        self.stats["cells_run"] = len(records)
        self.stats["cells_failed"] = sum(1 for r in records if r.failed)
        self.stats["elapsed"] = time.time() - start

        echo = config.to_dict()
        echo["rows"] = {"loaded": self.stats["rows_loaded"], "train_pool": train_pool.m, "test": test.m}
        table = ResultTable(records=records, config=echo)
        self.logger.info(f"✅ Ingest {config.name} finished: {len(records)} records in {self.stats['elapsed']:.1f}s")

        if config.output:
            write_results(table, config.output)
            self.write_schema(config.output)
        return table

    def run_replicate(self, train_pool: TrajectoryTable, test: TrajectoryTable, size: int,
                      replicate: int, stream: RngStream) -> List[MetricRecord]:
        config = self.config
        base: Dict[str, Any] = {
            "seed": stream.seed64,
            "n": size,
            "T": config.data_schema.T,
            "axis_name": "n",
            "axis_value": float(size),
            "replicate": replicate,
            "stream": stream.stream_index,
        }
        try:
            subsample = subsample_rows(train_pool, size, stream.child(TRAIN_STREAM))
            stats = fit_preprocess(subsample)
            train_set = apply_preprocess(subsample, stats)
            test_set = apply_preprocess(test, stats)
        except CELL_ERRORS as e:
            tag = describe_error(e)
            self.logger.warning(f"⚠️ Preprocessing failed for n={size} replicate {replicate}: {tag}")
            return [MetricRecord(estimator=s.label, d=config.data_schema.d, error=tag, **base)
                    for s in config.estimators]

        extra = {"dropped_features": float(len(stats.dropped_features))}
        fitted: Dict[str, Predictor] = {}
        records = []
        for spec in config.estimators:
            try:
                predictor = fit_estimator(spec, train_set, stream.child(SELECTION_STREAM))
                records.append(self._score(spec.label, predictor, test_set, base, extra))
                fitted[spec.label] = predictor
            except CELL_ERRORS as e:
                tag = describe_error(e)
                self.logger.warning(f"⚠️ {spec.label} failed for n={size} replicate {replicate}: {tag}")
                records.append(MetricRecord(estimator=spec.label, d=train_set.d, error=tag, **base))

        gap = replicate_gap(config.estimators, fitted, train_set)
        for record in records:
            record.gap = gap
        return records

    @staticmethod
    def _score(label: str, predictor: Predictor, test: TrajectoryDataset,
               base: Dict[str, Any], extra: Dict[str, float]) -> MetricRecord:
        score = None
        if test.m >= 2 and not np.all(test.outcomes == test.outcomes[0, 0]):
            score = r_squared(predictor.predict(test.baseline), test.outcomes)
        return MetricRecord(
            estimator=label,
            d=test.d,
            r_squared=score,
            empirical_risk=empirical_risk(predictor, test),
            extra=dict(extra),
            **base,
        )

    def write_schema(self, output: str) -> Path:
        """Echo the CSV schema next to the results."""
        path = Path(str(output) + ".schema.json")
        try:
            with open(path, "w", encoding="utf-8") as f:
                json.dump(self.config.data_schema.model_dump(), f, indent=2, sort_keys=True)
        except OSError as e:
            raise ResultsIOError(f"could not write schema echo {path}: {e}", path=str(path)) from e
        return path

    def get_status(self) -> Dict[str, Any]:
        return {"name": self.config.name, "csv_path": self.config.csv_path, **self.stats}


def run_ingest(config: IngestConfig) -> ResultTable:
    return IngestController(config).run()
