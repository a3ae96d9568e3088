"""Input validation helpers used by the estimators and the engine."""

import numpy as np

from .exceptions import DataError, DimensionError, NumericError


def as_float_matrix(X, name="X"):
    """Coerce to a 2-d float64 array, rejecting non-finite entries."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2:
        raise DimensionError(f"{name} must be 2-dimensional, got shape {X.shape}")
    if X.shape[0] == 0 or X.shape[1] == 0:
        raise DataError(f"{name} is empty (shape {X.shape})")
    if not np.isfinite(X).all():
        raise NumericError(f"{name} contains NaN or Inf values")
    return X


def as_label_vector(y, n_rows, name="y"):
    """Coerce to a 1-d int64 label vector aligned with ``n_rows``."""
    y = np.asarray(y)
    if y.ndim != 1:
        raise DimensionError(f"{name} must be 1-dimensional, got shape {y.shape}")
    if y.shape[0] != n_rows:
        raise DimensionError(f"{name} has {y.shape[0]} entries for {n_rows} rows")
    if not np.issubdtype(y.dtype, np.integer):
        yi = y.astype(np.int64)
        if not np.array_equal(yi, y):
            raise DataError(f"{name} must contain integer class labels")
        y = yi
    return y.astype(np.int64)


def check_feature_count(X, n_features, name="X"):
    if X.shape[1] != n_features:
        raise DimensionError(
            f"{name} has {X.shape[1]} features, model expects {n_features}"
        )


def check_classes(y, n_classes, name="y"):
    if y.min() < 0 or y.max() >= n_classes:
        raise DataError(
            f"{name} contains labels outside 0..{n_classes - 1}"
        )


def check_fitted(estimator, attribute):
    if not hasattr(estimator, attribute):
        raise RuntimeError(
            f"{type(estimator).__name__} is not fitted; call fit() first"
        )
