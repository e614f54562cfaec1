"""
Trajectory CSV ingestion and preprocessing

Wide layout, one series per row: columns x{t}_{j} for t in 1..T, j in 1..d,
an outcome column and optionally an id column that is ignored. Categorical
features must be encoded numerically before loading.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, field_validator
from sklearn.feature_selection import VarianceThreshold
from sklearn.impute import SimpleImputer
from sklearn.preprocessing import StandardScaler

from core.regression import Matrix
from safety.guards import DataFormatError, ParameterError, SchemaError
from simulation.rng import RngStream
from simulation.system import TrajectoryDataset


logger = logging.getLogger(__name__)


class TrajectorySchema(BaseModel):
    """Shape and markers of a trajectory CSV."""
    T: int = Field(description="Number of time points per series")
    d: int = Field(description="Features per time point")
    outcome_column: str = Field(default="y", description="Name of the outcome column")
    missing_marker: str = Field(default="", description="Cell text that marks a missing state value")
    id_column: Optional[str] = Field(default="id", description="Optional identifier column, ignored")

    @field_validator("T")
    @classmethod
    def _horizon(cls, value: int) -> int:
        if value < 1:
            raise ValueError(f"T must be >= 1, got {value}")
        return value

    @field_validator("d")
    @classmethod
    def _width(cls, value: int) -> int:
        if value < 1:
            raise ValueError(f"d must be >= 1, got {value}")
        return value

    def state_columns(self) -> List[str]:
        return [f"x{t}_{j}" for t in range(1, self.T + 1) for j in range(1, self.d + 1)]

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "TrajectorySchema":
        try:
            with open(path, encoding="utf-8") as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise SchemaError(f"could not read schema {path}: {e}", path=str(path)) from e
        try:
            return cls(**data)
        except ValueError as e:
            raise SchemaError(f"invalid schema in {path}: {e}", path=str(path)) from e


@dataclass(frozen=True, eq=False)
class TrajectoryTable:
    """Parsed rows; missing state cells are NaN and flagged in `missing`.

    row_numbers are the 1-based data-row positions in the source file.
    """
    schema: TrajectorySchema
    states: Matrix
    outcomes: Matrix
    row_numbers: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.intp))

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.float64)
        outcomes = np.asarray(self.outcomes, dtype=np.float64).reshape(-1)
        width = self.schema.T * self.schema.d
        if states.ndim != 2 or states.shape[1] != width:
            raise SchemaError(f"state block has shape {states.shape}, schema needs {width} columns")
        if outcomes.shape[0] != states.shape[0]:
            raise SchemaError("outcome count differs from row count")
        if not np.all(np.isfinite(outcomes)):
            raise DataFormatError("outcome column contains missing or non-finite values",
                                  column=self.schema.outcome_column)
        rows = np.asarray(self.row_numbers, dtype=np.intp)
        if rows.size == 0:
            rows = np.arange(1, states.shape[0] + 1, dtype=np.intp)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "row_numbers", rows)

    @property
    def m(self) -> int:
        return self.states.shape[0]

    @property
    def T(self) -> int:
        return self.schema.T

    @property
    def d(self) -> int:
        return self.schema.d

    @property
    def column_names(self) -> List[str]:
        return self.schema.state_columns() + [self.schema.outcome_column]

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.states)

    def take(self, indices: Sequence[int]) -> "TrajectoryTable":
        rows = np.asarray(indices, dtype=np.intp)
        return TrajectoryTable(schema=self.schema, states=self.states[rows],
                               outcomes=self.outcomes[rows], row_numbers=self.row_numbers[rows])


def _column_values(cells: pd.Series, column: str, marker: str) -> np.ndarray:
    """Numeric values of one state column; marker cells become NaN."""
    present = cells.where(cells != marker)
    numeric = pd.to_numeric(present, errors="coerce")
    bad = numeric.isna() & present.notna()
    if bad.any():
        position = int(np.flatnonzero(bad.to_numpy())[0])
        text = present.iloc[position]
        raise DataFormatError(f"row {position + 2}, column {column}: cannot parse {text!r} as a number",
                              row=position + 2, column=column)
    values = present.astype(np.float64).to_numpy()
    infinite = np.isinf(values)
    if infinite.any():
        position = int(np.flatnonzero(infinite)[0])
        raise DataFormatError(f"row {position + 2}, column {column}: non-finite value {present.iloc[position]!r}",
                              row=position + 2, column=column)
    return values


def load_trajectory_csv(path: Union[str, Path], schema: TrajectorySchema) -> TrajectoryTable:
    """Read a wide trajectory CSV.

    Rows in errors are 1-based file lines (header is line 1); blank lines are
    skipped and not counted.
    """
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"trajectory file not found: {path}", path=str(path))

    try:
        raw = pd.read_csv(path, header=None, dtype=str, keep_default_na=False,
                          encoding="utf-8-sig", skip_blank_lines=True)
    except pd.errors.EmptyDataError:
        raise DataFormatError(f"{path} is empty", row=1) from None
    except pd.errors.ParserError as e:
        raise DataFormatError(f"malformed row in {path}: {e}", path=str(path)) from e

    header = [str(name).strip() for name in raw.iloc[0]]
    expected = schema.state_columns() + [schema.outcome_column]
    allowed = set(expected) | ({schema.id_column} if schema.id_column else set())
    unknown = [name for name in header if name not in allowed]
    absent = [name for name in expected if name not in header]
    if unknown or absent or len(set(header)) != len(header):
        raise DataFormatError(
            f"header does not match schema T={schema.T}, d={schema.d}",
            row=1, unknown=unknown, missing=absent,
        )

    frame = raw.iloc[1:].reset_index(drop=True)
    frame.columns = header
    if frame.empty:
        raise DataFormatError(f"{path} has a header but no data rows", row=2)
    short = frame.isna().any(axis=1).to_numpy()
    if short.any():
        line = int(np.flatnonzero(short)[0]) + 2
        raise DataFormatError(f"row {line} has fewer cells than the header", row=line, expected=len(header))
    frame = frame.apply(lambda column: column.str.strip())

    outcome = frame[schema.outcome_column]
    blank = ((outcome == schema.missing_marker) | (outcome == "")).to_numpy()
    if blank.any():
        line = int(np.flatnonzero(blank)[0]) + 2
        raise DataFormatError(f"row {line}: outcome is missing", row=line, column=schema.outcome_column)

    states = np.column_stack([_column_values(frame[name], name, schema.missing_marker)
                              for name in schema.state_columns()])
    outcomes = _column_values(outcome, schema.outcome_column, schema.missing_marker)
    table = TrajectoryTable(schema=schema, states=states, outcomes=outcomes)
    logger.info(f"Loaded {table.m} series (T={schema.T}, d={schema.d}, "
                f"{int(table.missing.sum())} missing cells) from {path}")
    return table


def write_trajectory_csv(table: TrajectoryTable, path: Union[str, Path]) -> Path:
    """Write a table back in the wide layout; missing cells use the schema's marker."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(np.column_stack([table.states, table.outcomes]), columns=table.column_names)
    frame.to_csv(path, index=False, na_rep=table.schema.missing_marker, lineterminator="\n")
    return path


@dataclass(frozen=True, eq=False)
class PreprocessStats:
    """Transformers fitted on a training split; column order follows the state block layout.

    The scaler ignores missing cells when fitting, so means and stds come
    from observed training values only.
    """
    schema: TrajectorySchema
    imputer: SimpleImputer
    scaler: StandardScaler
    outcome_scaler: StandardScaler
    imputation_counts: np.ndarray
    dropped_features: Tuple[int, ...] = ()

    @property
    def means(self) -> Matrix:
        return self.scaler.mean_

    @property
    def stds(self) -> Matrix:
        return np.sqrt(self.scaler.var_)

    @property
    def outcome_mean(self) -> float:
        return float(self.outcome_scaler.mean_[0])

    @property
    def outcome_std(self) -> float:
        return float(self.outcome_scaler.scale_[0])

    @property
    def retained_features(self) -> List[int]:
        """0-based feature indices kept in every time block."""
        return [j for j in range(self.schema.d) if j + 1 not in self.dropped_features]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema": self.schema.model_dump(),
            "columns": self.schema.state_columns(),
            "means": self.means.tolist(),
            "stds": self.stds.tolist(),
            "imputation_counts": self.imputation_counts.tolist(),
            "outcome_mean": self.outcome_mean,
            "outcome_std": self.outcome_std,
            "dropped_features": list(self.dropped_features),
        }


def fit_preprocess(train: TrajectoryTable) -> PreprocessStats:
    """Fit imputation and standardization on training rows only; std uses ddof=0.

    A feature whose column is constant at any time point is dropped from
    every time block, so the blocks keep a common width.
    """
    if train.m < 2:
        raise ParameterError(f"preprocessing needs at least two training rows, got {train.m}")
    counts = (~train.missing).sum(axis=0)
    names = train.schema.state_columns()
    empty = [names[k] for k in np.flatnonzero(counts == 0)]
    if empty:
        raise DataFormatError(f"columns with no observed training values: {empty}", column=empty[0])

    variance = VarianceThreshold(threshold=0.0)
    try:
        variance.fit(train.states)
        constant_columns = ~variance.get_support()
    except ValueError:
        constant_columns = np.ones(train.states.shape[1], dtype=bool)
    constant = constant_columns.reshape(train.T, train.d).any(axis=0)
    dropped = tuple(int(j) + 1 for j in np.flatnonzero(constant))
    if len(dropped) == train.d:
        raise DataFormatError("every feature has zero variance on the training rows")
    if np.ptp(train.outcomes) == 0.0:
        raise DataFormatError("outcome has zero variance on the training rows", column=train.schema.outcome_column)
    if dropped:
        logger.warning(f"Dropping zero-variance features {list(dropped)} from every time block")

    return PreprocessStats(
        schema=train.schema,
        imputer=SimpleImputer(strategy="mean").fit(train.states),
        scaler=StandardScaler().fit(train.states),
        outcome_scaler=StandardScaler().fit(train.outcomes.reshape(-1, 1)),
        imputation_counts=(train.m - counts).astype(np.intp),
        dropped_features=dropped,
    )


def apply_preprocess(table: TrajectoryTable, stats: PreprocessStats) -> TrajectoryDataset:
    """Impute training means, standardize with training statistics, drop dropped features."""
    if (table.T, table.d) != (stats.schema.T, stats.schema.d):
        raise SchemaError(
            f"table has T={table.T}, d={table.d} but statistics were fitted on "
            f"T={stats.schema.T}, d={stats.schema.d}"
        )
    standardized = stats.scaler.transform(stats.imputer.transform(table.states))
    keep = stats.retained_features
    blocks = tuple(standardized[:, t * table.d:(t + 1) * table.d][:, keep] for t in range(table.T))
    outcomes = stats.outcome_scaler.transform(table.outcomes.reshape(-1, 1))
    return TrajectoryDataset(states=blocks, outcomes=outcomes)


def split_rows(table: TrajectoryTable, train_fraction: float = 0.8,
               rng: Optional[RngStream] = None) -> Tuple[TrajectoryTable, TrajectoryTable]:
    """Seeded disjoint train/test partition; each part keeps file order."""
    if not 0.0 < train_fraction < 1.0:
        raise ParameterError(f"train fraction must lie in (0, 1), got {train_fraction}")
    n_train = int(round(table.m * train_fraction))
    if n_train == 0 or n_train == table.m:
        raise ParameterError(
            f"a {train_fraction:.0%}/{1 - train_fraction:.0%} split of {table.m} rows leaves an empty part",
            m=table.m,
        )
    order = (rng or RngStream(0)).generator().permutation(table.m)
    return table.take(np.sort(order[:n_train])), table.take(np.sort(order[n_train:]))


def subsample_rows(table: TrajectoryTable, n: int, rng: Optional[RngStream] = None) -> TrajectoryTable:
    """n distinct rows drawn without replacement."""
    if int(n) != n or n < 1 or n > table.m:
        raise ParameterError(f"cannot draw {n} distinct rows from {table.m}", n=n, m=table.m)
    indices = (rng or RngStream(0)).generator().choice(table.m, size=int(n), replace=False)
    return table.take(np.sort(indices))


def table_to_dataset(table: TrajectoryTable) -> TrajectoryDataset:
    """Complete table to dataset without any transformation."""
    if table.missing.any():
        raise DataFormatError("table has missing cells; preprocess it first", count=int(table.missing.sum()))
    blocks = tuple(table.states[:, t * table.d:(t + 1) * table.d] for t in range(table.T))
    return TrajectoryDataset(states=blocks, outcomes=table.outcomes.reshape(-1, 1))


def dataset_to_table(dataset: TrajectoryDataset, outcome_column: str = "y") -> TrajectoryTable:
    schema = TrajectorySchema(T=dataset.horizon, d=dataset.d, outcome_column=outcome_column)
    return TrajectoryTable(schema=schema, states=np.hstack(dataset.states), outcomes=dataset.outcomes[:, 0])
