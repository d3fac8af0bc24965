"""Input validation helpers shared by the estimators."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array


def check_codes(X, cardinalities=None) -> np.ndarray:
    """Validate a 2-D matrix of non-negative integer codes.

    Float input is accepted when every entry is integral (sklearn utilities
    sometimes upcast).
    """
    X = check_array(X, dtype=None, ensure_all_finite=True, ensure_min_samples=0)
    if X.dtype.kind == "f":
        if not np.all(X == np.round(X)):
            raise ValueError("feature codes must be integers")
        X = X.astype(np.int64)
    elif X.dtype.kind not in "iu":
        raise ValueError(f"feature codes must be integers, got dtype {X.dtype}")
    else:
        X = X.astype(np.int64, copy=False)
    if X.size and X.min() < 0:
        raise ValueError("feature codes must be non-negative")
    if cardinalities is not None:
        card = np.asarray(cardinalities, dtype=np.int64)
        if X.shape[1] != card.size:
            raise ValueError(f"expected {card.size} features, got {X.shape[1]}")
        if X.size and np.any(X.max(axis=0) >= card):
            bad = int(np.argmax(X.max(axis=0) >= card))
            raise ValueError(f"feature {bad}: code outside domain of size {card[bad]}")
    return X


def check_targets(y, n_samples: int, n_classes: int | None = None) -> tuple[np.ndarray, int]:
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != n_samples:
        raise ValueError(f"y must be 1-D with {n_samples} entries")
    if y.size and (y.dtype.kind not in "iu" or y.min() < 0):
        if y.dtype.kind == "f" and np.all(y == np.round(y)) and y.min() >= 0:
            pass
        else:
            raise ValueError("class labels must be non-negative integer codes")
    y = y.astype(np.int64)
    inferred = int(y.max()) + 1 if y.size else 0
    if n_classes is None:
        n_classes = inferred
    elif inferred > n_classes:
        raise ValueError(f"label code {inferred - 1} out of range for {n_classes} classes")
    return y, int(n_classes)


def check_real(X, n_features: int | None = None) -> np.ndarray:
    X = check_array(X, dtype=np.float64, ensure_min_samples=0)
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"expected {n_features} columns, got {X.shape[1]}")
    return X
