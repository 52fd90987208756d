"""Small input-validation helpers shared across the package."""

import numbers

import numpy as np


def check_positive(value, name):
    """Raise ValueError unless value is a finite number > 0."""
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a finite positive number, got {value!r}")
    return float(value)


def check_nonnegative(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value < 0:
        raise ValueError(f"{name} must be a finite non-negative number, got {value!r}")
    return float(value)


def check_in_range(value, lo, hi, name):
    """Raise ValueError unless lo <= value <= hi."""
    if not np.isfinite(value) or value < lo or value > hi:
        raise ValueError(f"{name} must lie in [{lo}, {hi}], got {value!r}")
    return float(value)


def check_finite_array(arr, name):
    """Return arr as a float ndarray, rejecting NaN/inf entries."""
    arr = np.asarray(arr, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_rng(rng):
    """Accept a numpy Generator or a seed; return a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
