"""Input validation helpers used at module boundaries."""

import numpy as np

from .exceptions import DomainError, ShapeError

DIST_ATOL = 1e-9


def as_vector(x, name="x"):
    """Return ``x`` as a finite 1-D float64 array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite entries")
    return arr


def as_matrix(x, name="x", allow_empty=False):
    """Return ``x`` as a finite 2-D float64 array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if not allow_empty and arr.size == 0:
        raise DomainError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite entries")
    return arr


def check_distribution(p, name="distribution", atol=DIST_ATOL):
    """Validate a probability vector: nonempty, nonnegative, sums to one."""
    arr = as_vector(p, name)
    if arr.size == 0:
        raise DomainError(f"{name} has empty support")
    if np.any(arr < 0):
        raise DomainError(f"{name} has negative mass")
    total = arr.sum()
    if abs(total - 1.0) > atol:
        raise DomainError(f"{name} sums to {total!r}, expected 1")
    return arr


def as_feature_map(x, name="feature map"):
    """Return ``x`` as a finite (H, W, C) float64 array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 3:
        raise ShapeError(f"{name} must be (H, W, C), got shape {arr.shape}")
    if arr.size == 0:
        raise DomainError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite entries")
    return arr
