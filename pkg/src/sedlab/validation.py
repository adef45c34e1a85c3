"""Input validation helpers.

Small checks in the spirit of scikit-learn's ``check_array``, tuned to the
array shapes this package passes around (frame grids, label grids, class
vectors).  All helpers raise :class:`~sedlab.errors.InvalidInputError` and
return the validated array as float64 / int so callers can chain them.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError


def as_float_array(x, name: str, ndim: int | None = None) -> np.ndarray:
    """Coerce to a float64 ndarray, optionally enforcing dimensionality."""
    arr = np.asarray(x, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise InvalidInputError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    return arr


def check_finite(arr: np.ndarray, name: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return arr


def check_nonempty(arr: np.ndarray, name: str) -> np.ndarray:
    if arr.size == 0:
        raise InvalidInputError(f"{name} is empty")
    return arr


def check_binary(arr: np.ndarray, name: str) -> np.ndarray:
    """Entries must be exactly 0 or 1."""
    if not np.all((arr == 0) | (arr == 1)):
        raise InvalidInputError(f"{name} must contain only 0/1 entries")
    return arr


def check_unit_interval(arr: np.ndarray, name: str) -> np.ndarray:
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise InvalidInputError(f"{name} must lie in [0, 1]")
    return arr


def check_same_shape(a: np.ndarray, b: np.ndarray, name_a: str, name_b: str) -> None:
    if a.shape != b.shape:
        raise InvalidInputError(
            f"{name_a} and {name_b} must share a shape, got {a.shape} vs {b.shape}"
        )


def check_odd(n: int, name: str) -> int:
    n = int(n)
    if n < 1 or n % 2 == 0:
        raise InvalidInputError(f"{name} must be an odd integer >= 1, got {n}")
    return n


def check_positive(value, name: str):
    if not value > 0:
        raise InvalidInputError(f"{name} must be positive, got {value}")
    return value


def check_probability_grid(arr: np.ndarray, name: str) -> np.ndarray:
    """2-D grid of probabilities in [0, 1], finite."""
    arr = as_float_array(arr, name, ndim=2)
    check_finite(arr, name)
    check_unit_interval(arr, name)
    return arr
