"""Input checks shared by the estimators."""

import numpy as np
from sklearn.utils.validation import check_array

from .errors import InputError


def check_bits(X, n_features=None):
    """Validate a 2-d 0/1 matrix and return it as ``uint8``."""
    X = getattr(X, "bits", X)
    X = check_array(X, dtype=None, ensure_2d=True, ensure_all_finite=True)
    if X.size and not np.isin(X, (0, 1)).all():
        raise InputError("inputs must be binary (0/1)")
    if n_features is not None and X.shape[1] != n_features:
        raise InputError(f"X has {X.shape[1]} features, expected {n_features}")
    return X.astype(np.uint8)


def image_shape(n_features, image_shape=None):
    if image_shape is not None:
        h, w = image_shape
        if h * w != n_features:
            raise InputError(f"image_shape {image_shape} does not hold {n_features} pixels")
        return int(h), int(w)
    side = int(round(np.sqrt(n_features)))
    return (side, side) if side * side == n_features else (1, n_features)
