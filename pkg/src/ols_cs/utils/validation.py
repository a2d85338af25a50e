"""Input validation shared by the functional API and the estimators."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils import check_array

from ..exceptions import DimensionMismatch


def check_dictionary(matrix, *, name="dictionary") -> np.ndarray:
    """Finite float64 2-D array with at least one row and one column."""
    return check_array(matrix, dtype=np.float64, ensure_2d=True, ensure_all_finite=True,
                       input_name=name)


def check_measurement(y, n_rows: int) -> np.ndarray:
    y = check_array(y, dtype=np.float64, ensure_2d=False, ensure_all_finite=True,
                    input_name="y")
    if y.ndim != 1:
        if y.ndim == 2 and 1 in y.shape:
            y = y.ravel()
        else:
            raise DimensionMismatch(f"y must be one-dimensional, got shape {y.shape}")
    if y.shape[0] != n_rows:
        raise DimensionMismatch(f"y has length {y.shape[0]}, dictionary has {n_rows} rows")
    return y


def check_count(value, name: str, *, minimum: int = 0, maximum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if value < minimum:
        raise ValueError(f"{name}={value} must be >= {minimum}")
    if maximum is not None and value > maximum:
        raise ValueError(f"{name}={value} must be <= {maximum}")
    return value


def check_probability(value, name: str, *, open_low=False, open_high=False) -> float:
    value = float(value)
    low_ok = value > 0 if open_low else value >= 0
    high_ok = value < 1 if open_high else value <= 1
    if not (low_ok and high_ok):
        lo = "(" if open_low else "["
        hi = ")" if open_high else "]"
        raise ValueError(f"{name}={value} outside {lo}0, 1{hi}")
    return value
