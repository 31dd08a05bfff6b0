import numpy as np

from .exceptions import DataError, ParameterError


def depth_to_normal(depth, fx, fy):
    """Unit surface normals from a metric depth map by finite differences.

    Depth is treated as a height field over the image plane at unit
    distance, where one pixel spans ``1/fx`` by ``1/fy``. The normal is
    ``(-fx dz/du, -fy dz/dv, 1)`` normalized, so a constant depth gives
    ``(0, 0, 1)`` and any depth that is linear in pixel coordinates gives a
    constant normal. Interior pixels use central differences, border pixels
    one-sided ones. Returns an ``(H, W, 3)`` array.
    """
    z = np.asarray(depth, dtype=np.float64)
    if z.ndim != 2 or z.size == 0:
        raise DataError(f"depth must be a nonempty 2-D map, got shape {z.shape}")
    if not np.all(np.isfinite(z)) or np.any(z <= 0):
        raise DataError("depth must be finite and strictly positive")
    if not (fx > 0 and fy > 0):
        raise ParameterError("focal lengths must be positive")
    h, w = z.shape
    dz_dv = np.gradient(z, axis=0) if h > 1 else np.zeros_like(z)
    dz_du = np.gradient(z, axis=1) if w > 1 else np.zeros_like(z)
    n = np.stack([-fx * dz_du, -fy * dz_dv, np.ones_like(z)], axis=-1)
    return n / np.linalg.norm(n, axis=-1, keepdims=True)
