"""
Guards - input validation rules and the structured error hierarchy
"""

import logging
from enum import Enum
from typing import Any, Dict, Optional

import numpy as np
from numpy.typing import NDArray


logger = logging.getLogger(__name__)


class ErrorKind(Enum):
    """Categories of failures reported by the library and the CLI."""
    DIMENSION_MISMATCH = "dimension_mismatch"
    NON_FINITE = "non_finite"
    INVALID_PARAMETER = "invalid_parameter"
    DEGENERATE_SYSTEM = "degenerate_system"
    MISSPECIFIED_SYSTEM = "misspecified_system"
    DATA_FORMAT = "data_format"
    SCHEMA_MISMATCH = "schema_mismatch"
    CONFIG = "config"
    RESULTS_IO = "results_io"
    UNKNOWN_PRESET = "unknown_preset"


class PrivilegedTSError(Exception):
    """Base error carrying a kind, a message and structured context."""

    kind: ErrorKind = ErrorKind.INVALID_PARAMETER

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.message = message
        self.context: Dict[str, Any] = context

    def to_dict(self) -> Dict[str, Any]:
        """Machine-readable form used on the CLI's stderr."""
        return {
            "error": self.kind.value,
            "message": self.message,
            "context": {key: _jsonable(value) for key, value in self.context.items()},
        }


class DimensionError(PrivilegedTSError):
    kind = ErrorKind.DIMENSION_MISMATCH


class NonFiniteError(PrivilegedTSError):
    kind = ErrorKind.NON_FINITE


class ParameterError(PrivilegedTSError):
    kind = ErrorKind.INVALID_PARAMETER


class DegenerateSystemError(PrivilegedTSError):
    kind = ErrorKind.DEGENERATE_SYSTEM


class MisspecifiedSystemError(PrivilegedTSError):
    kind = ErrorKind.MISSPECIFIED_SYSTEM


class DataFormatError(PrivilegedTSError):
    """Malformed input file; row and column are 1-based file coordinates."""
    kind = ErrorKind.DATA_FORMAT

    def __init__(self, message: str, row: Optional[int] = None,
                 column: Optional[str] = None, **context: Any):
        super().__init__(message, row=row, column=column, **context)
        self.row = row
        self.column = column


class SchemaError(PrivilegedTSError):
    kind = ErrorKind.SCHEMA_MISMATCH


class ConfigError(PrivilegedTSError):
    kind = ErrorKind.CONFIG


class ResultsIOError(PrivilegedTSError):
    kind = ErrorKind.RESULTS_IO


class UnknownPresetError(PrivilegedTSError):
    kind = ErrorKind.UNKNOWN_PRESET


def _jsonable(value: Any) -> Any:
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, (tuple, list)):
        return [_jsonable(item) for item in value]
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    return str(value)


def as_matrix(value: Any, name: str = "matrix") -> NDArray[np.float64]:
    """Coerce to a finite 2-D float64 array with at least one row and column.

    1-D input is read as a column vector.
    """
    array = np.asarray(value, dtype=np.float64)
    if array.ndim == 1:
        array = array.reshape(-1, 1)
    if array.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got {array.ndim}-D", name=name, shape=array.shape)
    if array.shape[0] < 1 or array.shape[1] < 1:
        raise DimensionError(f"{name} must have at least one row and column", name=name, shape=array.shape)
    ensure_finite(array, name)
    return array


def ensure_finite(array: NDArray[np.float64], name: str = "array") -> None:
    if not np.all(np.isfinite(array)):
        bad = int(np.size(array) - np.count_nonzero(np.isfinite(array)))
        raise NonFiniteError(f"{name} contains {bad} non-finite entries", name=name, count=bad)


def ensure_square(array: NDArray[np.float64], name: str = "matrix") -> None:
    if array.ndim != 2 or array.shape[0] != array.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {array.shape}", name=name, shape=array.shape)


def ensure_same_rows(left: NDArray[np.float64], right: NDArray[np.float64],
                     left_name: str = "design", right_name: str = "targets") -> None:
    if left.shape[0] != right.shape[0]:
        raise DimensionError(
            f"{left_name} has {left.shape[0]} rows but {right_name} has {right.shape[0]}",
            left=left_name, right=right_name, left_rows=left.shape[0], right_rows=right.shape[0],
        )


def ensure_unit_interval(value: float, name: str = "lambda") -> float:
    value = float(value)
    if not np.isfinite(value) or not 0.0 <= value <= 1.0:
        raise ParameterError(f"{name} must lie in [0, 1], got {value}", name=name, value=value)
    return value


def ensure_positive(value: float, name: str, allow_zero: bool = False) -> float:
    value = float(value)
    ok = value >= 0.0 if allow_zero else value > 0.0
    if not np.isfinite(value) or not ok:
        bound = ">= 0" if allow_zero else "> 0"
        raise ParameterError(f"{name} must be finite and {bound}, got {value}", name=name, value=value)
    return value
