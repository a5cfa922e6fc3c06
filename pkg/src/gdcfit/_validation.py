"""Input validation helpers used by the functional and estimator APIs."""

from __future__ import annotations

import math
from numbers import Integral, Real

import numpy as np

from .errors import InvalidArgumentError


def check_finite_scalar(value, name: str) -> float:
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise InvalidArgumentError(f"{name} must be a real number, got {value!r}") from None
    if not math.isfinite(out):
        raise InvalidArgumentError(f"{name} must be finite, got {out!r}")
    return out


def check_positive(value, name: str) -> float:
    out = check_finite_scalar(value, name)
    if out <= 0:
        raise InvalidArgumentError(f"{name} must be > 0, got {out!r}")
    return out


def check_probability_arg(value, name: str) -> float:
    out = check_finite_scalar(value, name)
    if not 0.0 <= out <= 1.0:
        raise InvalidArgumentError(f"{name} must lie in [0, 1], got {out!r}")
    return out


def check_positive_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, Integral):
        if isinstance(value, Real) and float(value).is_integer():
            value = int(value)
        else:
            raise InvalidArgumentError(f"{name} must be an integer, got {value!r}")
    if value < 1:
        raise InvalidArgumentError(f"{name} must be >= 1, got {value!r}")
    return int(value)


def check_1d(values, name: str, *, min_length: int = 1) -> np.ndarray:
    """Return ``values`` as a finite float64 vector.

    Column vectors of shape ``(n, 1)`` are accepted and flattened so the
    estimator API can take sklearn-style 2-D ``X``.
    """
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise InvalidArgumentError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size < min_length:
        raise InvalidArgumentError(f"{name} needs at least {min_length} values, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains non-finite values")
    return arr


def check_time_grid(times, name: str = "times", *, min_length: int = 2) -> np.ndarray:
    arr = check_1d(times, name, min_length=min_length)
    if np.any(np.diff(arr) <= 0):
        bad = int(np.argmax(np.diff(arr) <= 0)) + 1
        raise InvalidArgumentError(f"{name} must be strictly increasing (violated at index {bad})")
    return arr


def check_same_length(a: np.ndarray, b: np.ndarray, names: str) -> None:
    if a.shape != b.shape:
        raise InvalidArgumentError(f"{names} differ in length: {a.size} vs {b.size}")
