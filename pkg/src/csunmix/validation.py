"""Input validation helpers.

Small checks used by the data types, the estimator layer and the CLI.
They normalise inputs to float64 C-contiguous arrays and raise
``ValueError`` with the offending argument named in the message.
"""

from __future__ import annotations

import numpy as np


def as_float_array(a, name: str, *, ndim: int | None = None) -> np.ndarray:
    """Coerce to a float64 ndarray, optionally enforcing dimensionality."""
    try:
        arr = np.asarray(a, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{name} is not numeric: {exc}") from None
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    return arr


def require_finite(arr: np.ndarray, name: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def require_nonnegative(arr: np.ndarray, name: str) -> np.ndarray:
    if arr.size and arr.min() < 0:
        raise ValueError(f"{name} contains negative entries")
    return arr


def require_positive(arr: np.ndarray, name: str) -> np.ndarray:
    if arr.size and arr.min() <= 0:
        raise ValueError(f"{name} must be strictly positive")
    return arr


def require_binary(arr: np.ndarray, name: str) -> np.ndarray:
    """Validate a {0,1}-valued array and return it as uint8."""
    a = np.asarray(arr)
    if a.dtype == np.uint8:
        vals_ok = bool(np.all(a <= 1))
    else:
        vals_ok = bool(np.all((a == 0) | (a == 1)))
    if not vals_ok:
        raise ValueError(f"{name} must contain only 0/1 entries")
    return a.astype(np.uint8, copy=False)


def check_positive_int(value, name: str, *, minimum: int = 1) -> int:
    iv = int(value)
    if iv != value or iv < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return iv


def check_vector_length(arr: np.ndarray, length: int, name: str) -> np.ndarray:
    arr = np.atleast_1d(arr)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a vector, got shape {arr.shape}")
    if arr.shape[0] == 1 and length > 1:
        arr = np.full(length, arr[0], dtype=arr.dtype)
    if arr.shape[0] != length:
        raise ValueError(f"{name} must have length {length}, got {arr.shape[0]}")
    return arr


def frozen_copy(arr: np.ndarray) -> np.ndarray:
    """Contiguous copy with the writeable flag cleared."""
    out = np.ascontiguousarray(arr).copy()
    out.flags.writeable = False
    return out
