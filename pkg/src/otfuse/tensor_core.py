"""Elementary math shared by the solver, anchor and fusion code.

All arithmetic is float64. Inputs are never modified in place.
"""

import numpy as np

from .exceptions import DegenerateVectorError, DomainError, ParameterError, ShapeError
from .validation import as_vector, check_distribution


def logsumexp(a, axis=None, keepdims=False):
    """Max-shifted log-sum-exp; rows that are all ``-inf`` give ``-inf``."""
    a = np.asarray(a, dtype=np.float64)
    amax = np.max(a, axis=axis, keepdims=True)
    amax = np.where(np.isfinite(amax), amax, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - amax), axis=axis, keepdims=True)) + amax
    if not keepdims:
        out = np.squeeze(out, axis=axis) if axis is not None else out.reshape(())
    return out


def softmax_with_temperature(logits, tau):
    """Temperature-scaled softmax ``exp(z_i / tau) / sum_j exp(z_j / tau)``.

    Works on the last axis, so a 2-D array of logits is treated as a batch.
    """
    if not tau > 0:
        raise ParameterError(f"temperature must be positive, got {tau!r}")
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim == 0 or z.shape[-1] == 0:
        raise DomainError("softmax of empty logits")
    if not np.all(np.isfinite(z)):
        raise DomainError("logits contain non-finite entries")
    z = z / tau
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def tensor_product_joint(p_weather, p_time, p_road):
    """Joint over scene combinations as the outer product of three marginals.

    The flat index is weather-major, then time-of-day, then road type:
    ``joint[(w * |D| + d) * |R| + r] = pW[w] * pD[d] * pR[r]``.
    """
    marginals = [
        check_distribution(p, name)
        for p, name in ((p_weather, "weather"), (p_time, "time_of_day"), (p_road, "road_type"))
    ]
    pw, pd, pr = marginals
    return np.einsum("i,j,k->ijk", pw, pd, pr).reshape(-1)


def marginalize_joint(joint, sizes):
    """Inverse view of :func:`tensor_product_joint`: the three marginals of ``joint``."""
    cube = np.asarray(joint, dtype=np.float64).reshape(sizes)
    return cube.sum(axis=(1, 2)), cube.sum(axis=(0, 2)), cube.sum(axis=(0, 1))


def cosine_distance(a, b):
    """``1 - <a, b> / (|a| |b|)``, clipped to ``[0, 2]``."""
    a = as_vector(a, "a")
    b = as_vector(b, "b")
    if a.shape != b.shape:
        raise ShapeError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise DegenerateVectorError("cosine distance of a zero-norm vector")
    d = 1.0 - float(np.dot(a, b)) / (na * nb)
    return min(max(d, 0.0), 2.0)
