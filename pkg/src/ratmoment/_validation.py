"""Input validation helpers shared by the public functions."""

import numpy as np

from .exceptions import ConfigurationError


def as_vector(x, n=None, name="vector"):
    """Return ``x`` as a finite 1-d float array, optionally of length ``n``."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ConfigurationError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise ConfigurationError(f"{name} must have length {n}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{name} contains non-finite entries")
    return arr


def as_points(x, dim, name="points"):
    """Return ``x`` as an ``(m, dim)`` float array.

    A flat array is accepted as a single point when ``dim > 1`` and as a
    list of scalar points when ``dim == 1``.
    """
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, dim) if dim > 1 else arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ConfigurationError(f"{name} must have shape (m, {dim}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{name} contains non-finite entries")
    return arr


def check_positive(value, name):
    if not value > 0:
        raise ConfigurationError(f"{name} must be positive, got {value!r}")
    return value
