"""Synthetic phantoms for the desk-scale registration experiments.

Shapes are rendered analytically with supersampling, so edges carry partial
volume values and the images stay in ``[0, 1]``.  A warp ``p -> A (p - c) + c``
about the image centre ``c`` is applied by pulling the indicator back through
``A^{-1}``.
"""

import numpy as np

from ..errors import InputError


def _pixel_samples(size, supersample):
    """Sub-pixel sample coordinates, shape ``(size, size, m * m, 2)`` as (x, y)."""
    m = supersample
    sub = (np.arange(m) + 0.5) / m - 0.5
    px = np.arange(size)
    X = px[None, :, None, None] + sub[None, None, None, :]
    Y = px[:, None, None, None] + sub[None, None, :, None]
    X, Y = np.broadcast_arrays(X, Y)
    return np.stack([X.reshape(size, size, m * m), Y.reshape(size, size, m * m)], axis=-1)


def render(indicator, size, A=None, center=None, supersample=4):
    """Rasterise ``indicator`` (a vectorised point predicate) under ``A``.

    Pixel ``(row, col)`` covers the point ``(x, y) = (col, row)``.  The
    warped image is ``I(p) = indicator(A^{-1} (p - c) + c)``.
    """
    if size < 2 or supersample < 1:
        raise InputError("size must be at least 2 and supersample at least 1")
    c = np.full(2, (size - 1) / 2.0) if center is None else np.asarray(center, dtype=float)
    pts = _pixel_samples(size, supersample)
    if A is not None:
        A = np.asarray(A, dtype=float)
        if np.linalg.det(A) <= 0:
            raise InputError("warp matrix must have positive determinant")
        pts = (pts - c) @ np.linalg.inv(A).T + c
    return np.mean(indicator(pts), axis=-1).astype(float)


def square_phantom(size=128, side=48.0, A=None, center=None, supersample=4):
    """Filled axis-aligned square of edge ``side`` centred in the image."""
    c = np.full(2, (size - 1) / 2.0) if center is None else np.asarray(center, dtype=float)
    half = side / 2.0

    def inside(p):
        return np.all(np.abs(p - c) <= half, axis=-1)

    return render(inside, size, A, c, supersample)


def disk_phantom(size=128, radius=32.0, A=None, center=None, supersample=4):
    """Filled disk of ``radius`` centred in the image."""
    c = np.full(2, (size - 1) / 2.0) if center is None else np.asarray(center, dtype=float)

    def inside(p):
        return np.sum((p - c) ** 2, axis=-1) <= radius**2

    return render(inside, size, A, c, supersample)


def dilation(factor, dim=2):
    return factor * np.eye(dim)


def rotation(theta):
    """Counter-clockwise rotation by ``theta`` in (x, y) coordinates."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])
