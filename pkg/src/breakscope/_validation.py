"""Input checks shared by the estimator classes and the CLI."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array, check_consistent_length

from .exceptions import DataError


def check_series(y, min_length: int = 2) -> np.ndarray:
    """Finite float vector of at least ``min_length`` values."""
    try:
        y = check_array(y, ensure_2d=False, dtype=np.float64)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    if y.ndim != 1:
        raise DataError(f"expected a one-dimensional series, got shape {y.shape}")
    if y.shape[0] < min_length:
        raise DataError(f"series needs at least {min_length} observations, got {y.shape[0]}")
    return y


def check_regression(X, y) -> tuple[np.ndarray, np.ndarray]:
    """Finite ``(T, k)`` covariates and length-``T`` response."""
    try:
        X = check_array(X, dtype=np.float64, ensure_2d=False)
        y = check_array(y, ensure_2d=False, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        check_consistent_length(X, y)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    if y.ndim != 1:
        raise DataError(f"y must be one-dimensional, got shape {y.shape}")
    return X, y


def add_intercept(X: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(X.shape[0]), X])


def check_random_state_seed(random_state) -> int:
    """Integer seed from ``None`` (fresh entropy) or an integer."""
    if random_state is None:
        return int(np.random.SeedSequence().generate_state(1, np.uint64)[0] >> 1)
    if isinstance(random_state, (int, np.integer)) and random_state >= 0:
        return int(random_state)
    raise ValueError("random_state must be a non-negative integer or None")
