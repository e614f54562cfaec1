"""
Result tables: per-replicate rows, per-cell aggregates and CSV/JSON export
"""

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from analytics.metrics import MetricRecord
from safety.guards import ResultsIOError


logger = logging.getLogger(__name__)

BASE_COLUMNS = [
    "estimator", "seed", "replicate", "stream", "axis_name", "axis_value",
    "n", "T", "d", "relative_mse", "r_squared", "empirical_risk", "gap", "error",
]
METRIC_COLUMNS = ["relative_mse", "r_squared", "empirical_risk", "gap"]
AGGREGATE_COLUMNS = ["axis_name", "axis_value", "estimator", "metric", "mean", "std", "stderr", "count", "failed"]
EXTRA_PREFIX = "extra_"


@dataclass
class ResultTable:
    """Ordered records of one run plus the resolved config that produced them."""
    records: List[MetricRecord] = field(default_factory=list)
    config: Dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    def to_frame(self) -> pd.DataFrame:
        return records_to_frame(self.records)

    def aggregates(self) -> pd.DataFrame:
        return aggregate_frame(self.to_frame())

    def failures(self) -> List[MetricRecord]:
        return [r for r in self.records if r.failed]

    def cell(self, axis_value: float, estimator: str, metric: str = "relative_mse") -> Dict[str, float]:
        """Aggregate row for one (axis value, estimator, metric)."""
        agg = self.aggregates()
        match = agg[(agg["axis_value"] == axis_value) & (agg["estimator"] == estimator) & (agg["metric"] == metric)]
        if match.empty:
            raise KeyError(f"no aggregate for axis_value={axis_value}, estimator={estimator}, metric={metric}")
        return match.iloc[0].to_dict()

    def values(self, axis_value: float, estimator: str, metric: str = "relative_mse") -> np.ndarray:
        """Per-replicate values of one cell in replicate order, failures excluded."""
        rows = [r for r in self.records
                if r.axis_value == axis_value and r.estimator == estimator and not r.failed]
        return np.array([_metric(r, metric) for r in rows], dtype=np.float64)


def _metric(record: MetricRecord, metric: str) -> float:
    if metric.startswith(EXTRA_PREFIX):
        value = record.extra.get(metric[len(EXTRA_PREFIX):])
    else:
        value = getattr(record, metric)
    return math.nan if value is None else float(value)


def extra_keys(records: Sequence[MetricRecord]) -> List[str]:
    return sorted({key for record in records for key in record.extra})


def record_to_row(record: MetricRecord, extras: Sequence[str]) -> Dict[str, Any]:
    row: Dict[str, Any] = {name: getattr(record, name) for name in BASE_COLUMNS}
    for key in extras:
        row[EXTRA_PREFIX + key] = record.extra.get(key)
    return {name: "" if value is None else value for name, value in row.items()}


def records_to_frame(records: Sequence[MetricRecord]) -> pd.DataFrame:
    extras = extra_keys(records)
    columns = BASE_COLUMNS + [EXTRA_PREFIX + key for key in extras]
    rows = [record_to_row(r, extras) for r in records]
    frame = pd.DataFrame(rows, columns=columns)
    for name in columns:
        if name in METRIC_COLUMNS or name.startswith(EXTRA_PREFIX) or name == "axis_value":
            frame[name] = pd.to_numeric(frame[name].replace("", np.nan))
    frame["error"] = frame["error"].fillna("").astype(str)
    return frame


def _std(values: pd.Series) -> float:
    return float(values.std(ddof=1)) if len(values) > 1 else 0.0


def aggregate_frame(rows: pd.DataFrame) -> pd.DataFrame:
    """mean / std (ddof=1) / stderr / count per (axis value, estimator, metric).

    Failed rows are excluded from the statistics and counted in `failed`.
    Cells keep the order in which they first appear in rows.
    """
    if rows.empty:
        return pd.DataFrame(columns=AGGREGATE_COLUMNS)
    metrics = [c for c in rows.columns if c in METRIC_COLUMNS or c.startswith(EXTRA_PREFIX)]
    errors = rows["error"].fillna("").astype(str)
    output: List[Dict[str, Any]] = []
    for (axis_name, axis_value, estimator), cell in rows.groupby(
            ["axis_name", "axis_value", "estimator"], sort=False):
        cell_ok = cell[errors.loc[cell.index] == ""]
        failed = int(len(cell) - len(cell_ok))
        for metric in metrics:
            values = pd.to_numeric(cell_ok[metric], errors="coerce").dropna()
            if values.empty and failed == 0:
                continue
            count = int(len(values))
            std = _std(values)
            output.append({
                "axis_name": axis_name,
                "axis_value": axis_value,
                "estimator": estimator,
                "metric": metric,
                "mean": float(values.mean()) if count else math.nan,
                "std": std,
                "stderr": std / math.sqrt(count) if count else math.nan,
                "count": count,
                "failed": failed,
            })
    return pd.DataFrame(output, columns=AGGREGATE_COLUMNS)


def aggregate_records(records: Sequence[MetricRecord]) -> pd.DataFrame:
    return aggregate_frame(records_to_frame(records))


def paired_difference(table: ResultTable, axis_value: float, left: str, right: str,
                      metric: str = "relative_mse") -> Tuple[float, float]:
    """Mean and standard error of left - right over replicates both estimators completed."""
    by_replicate: Dict[int, Dict[str, float]] = {}
    for record in table.records:
        if record.axis_value == axis_value and record.estimator in (left, right) and not record.failed:
            by_replicate.setdefault(record.replicate, {})[record.estimator] = _metric(record, metric)
    differences = np.array([v[left] - v[right] for v in by_replicate.values() if left in v and right in v])
    if differences.size == 0:
        return math.nan, math.nan
    stderr = float(differences.std(ddof=1) / math.sqrt(differences.size)) if differences.size > 1 else 0.0
    return float(differences.mean()), stderr


def _paths(path: Union[str, Path]) -> Dict[str, Path]:
    base = str(path)
    return {
        "rows": Path(base + ".rows.csv"),
        "agg": Path(base + ".agg.csv"),
        "config": Path(base + ".config.json"),
    }


def write_results(table: ResultTable, path: Union[str, Path]) -> Dict[str, Path]:
    """Write <path>.rows.csv, <path>.agg.csv and <path>.config.json."""
    paths = _paths(path)
    extras = extra_keys(table.records)
    fieldnames = BASE_COLUMNS + [EXTRA_PREFIX + key for key in extras]
    try:
        paths["rows"].parent.mkdir(parents=True, exist_ok=True)
        with open(paths["rows"], "w", newline="", encoding="utf-8") as csvfile:
            writer = csv.DictWriter(csvfile, fieldnames=fieldnames, lineterminator="\n")
            writer.writeheader()
            for record in table.records:
                writer.writerow(record_to_row(record, extras))

        table.aggregates().to_csv(paths["agg"], index=False, lineterminator="\n", float_format="%.17g")

        with open(paths["config"], "w", encoding="utf-8") as jsonfile:
            json.dump(table.config, jsonfile, indent=2, sort_keys=True, default=str)
    except OSError as e:
        raise ResultsIOError(f"could not write results to {path}: {e}", path=str(path)) from e

    logger.info(f"Wrote {len(table.records)} rows to {paths['rows']}")
    return paths


def read_rows(path: Union[str, Path]) -> pd.DataFrame:
    """Parse a rows file written by write_results; path may be the prefix or the file."""
    target = Path(path)
    if not str(target).endswith(".rows.csv"):
        target = _paths(path)["rows"]
    try:
        frame = pd.read_csv(target, float_precision="round_trip", keep_default_na=False,
                            na_values={c: [""] for c in METRIC_COLUMNS})
    except (OSError, pd.errors.ParserError) as e:
        raise ResultsIOError(f"could not read rows from {target}: {e}", path=str(target)) from e
    for name in frame.columns:
        if name.startswith(EXTRA_PREFIX):
            frame[name] = pd.to_numeric(frame[name].replace("", np.nan))
    frame["error"] = frame["error"].astype(str)
    return frame


def read_aggregates(path: Union[str, Path]) -> pd.DataFrame:
    target = _paths(path)["agg"]
    try:
        return pd.read_csv(target, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ResultsIOError(f"could not read aggregates from {target}: {e}", path=str(target)) from e

