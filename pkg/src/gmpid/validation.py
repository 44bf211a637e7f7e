"""Input validation helpers shared across the package."""

from __future__ import annotations

import numpy as np

__all__ = [
    "check_positive_int",
    "check_positive_float",
    "check_nonnegative_float",
    "as_seed",
    "as_matrix",
    "as_vector",
    "as_variance_vector",
    "require_uniform_variances",
]


def check_positive_int(value, name: str) -> int:
    if not (isinstance(value, (int, np.integer)) and not isinstance(value, bool)):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    if value < 1:
        raise ValueError(f"{name} must be >= 1, got {value}")
    return int(value)


def check_positive_float(value, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0.0:
        raise ValueError(f"{name} must be a finite positive number, got {value}")
    return value


def check_nonnegative_float(value, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value < 0.0:
        raise ValueError(f"{name} must be finite and >= 0, got {value}")
    return value


def as_seed(seed) -> int:
    """Coerce to an unsigned 64-bit seed value."""
    if not (isinstance(seed, (int, np.integer)) and not isinstance(seed, bool)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must fit in an unsigned 64-bit integer, got {seed}")
    return seed


def as_matrix(a, name: str, shape: tuple[int, int] | None = None) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"{name} must be a 2-d array, got ndim={a.ndim}")
    if shape is not None and a.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError(f"{name} must be finite")
    return a


def as_vector(v, name: str, size: int | None = None) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"{name} must be a 1-d array, got ndim={v.ndim}")
    if size is not None and v.size != size:
        raise ValueError(f"{name} must have length {size}, got {v.size}")
    if not np.isfinite(v).all():
        raise ValueError(f"{name} must be finite")
    return v


def as_variance_vector(v, name: str, size: int) -> np.ndarray:
    """Broadcast a scalar or length-``size`` vector of strictly positive variances."""
    v = np.asarray(v, dtype=float)
    if v.ndim == 0:
        v = np.full(size, float(v))
    v = as_vector(v, name, size)
    if (v <= 0.0).any():
        raise ValueError(f"all entries of {name} must be > 0")
    return v


def require_uniform_variances(source_vars: np.ndarray, context: str) -> float:
    """Return the common variance, rejecting per-user variance profiles.

    Closed-form asymptotics assume one shared prior variance; simulation does
    not, so only analysis entry points call this.
    """
    v0 = float(source_vars[0])
    if not np.all(source_vars == v0):
        raise ValueError(
            f"{context} requires a uniform source variance; got a per-user profile"
        )
    return v0
