"""Scalar Gaussian kernel K(x, y) = exp(-|x - y|^2 / sigma^2) and its derivatives.

The kernel only depends on r = x - y, so every derivative is a derivative of
g(r) = exp(-s |r|^2) with s = 1 / sigma^2.  Differentiating with respect to
the second argument flips the sign once per derivative.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class KernelSpec:
    """Gaussian kernel of scale ``sigma`` acting on ``dim``-dimensional points."""

    sigma: float
    dim: int = 2

    def __post_init__(self):
        if not np.isfinite(self.sigma) or self.sigma <= 0:
            raise InputError(f"kernel sigma must be positive, got {self.sigma}")
        if self.dim not in (2, 3):
            raise InputError(f"kernel dimension must be 2 or 3, got {self.dim}")

    @property
    def s(self):
        return 1.0 / self.sigma**2


def _check_pair(spec, x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (spec.dim,) or y.shape != (spec.dim,):
        raise InputError(
            f"expected points of dimension {spec.dim}, got shapes {x.shape} and {y.shape}"
        )
    return x - y


def radial_derivatives(spec, r, order=3):
    """Return ``[g, Dg, D^2 g, ...]`` up to ``order`` for difference vectors ``r``.

    ``r`` has shape ``(..., d)``; the k-th entry of the result has shape
    ``(...,) + (d,) * k``.  ``order`` may be at most 4.
    """
    if order > 4:
        raise ValueError("derivatives above order 4 are not implemented")
    r = np.asarray(r, dtype=float)
    s = spec.s
    d = r.shape[-1]
    g = np.exp(-s * np.einsum("...i,...i->...", r, r))
    out = [g]
    if order >= 1:
        out.append(-2.0 * s * r * g[..., None])
    if order >= 2:
        eye = np.eye(d)
        rr = r[..., :, None] * r[..., None, :]
        out.append((4.0 * s**2 * rr - 2.0 * s * eye) * g[..., None, None])
    if order >= 3:
        rrr = rr[..., None] * r[..., None, None, :]
        # delta_ab r_c + delta_ac r_b + delta_bc r_a
        sym = (
            eye[:, :, None] * r[..., None, None, :]
            + eye[:, None, :] * r[..., None, :, None]
            + eye[None, :, :] * r[..., :, None, None]
        )
        out.append((-8.0 * s**3 * rrr + 4.0 * s**2 * sym) * g[..., None, None, None])
    if order >= 4:
        rrrr = rrr[..., None] * r[..., None, None, None, :]
        e = eye
        # the six delta_{..} r r placements
        drr = (
            e[:, :, None, None] * rr[..., None, None, :, :]
            + e[:, None, :, None] * rr[..., None, :, None, :]
            + e[:, None, None, :] * rr[..., None, :, :, None]
            + e[None, :, :, None] * rr[..., :, None, None, :]
            + e[None, :, None, :] * rr[..., :, None, :, None]
            + e[None, None, :, :] * rr[..., :, :, None, None]
        )
        dd = (
            e[:, :, None, None] * e[None, None, :, :]
            + e[:, None, :, None] * e[None, :, None, :]
            + e[:, None, None, :] * e[None, :, :, None]
        )
        out.append(
            (16.0 * s**4 * rrrr - 8.0 * s**3 * drr + 4.0 * s**2 * dd)
            * g[..., None, None, None, None]
        )
    return out


def eval(spec, x, y):
    """K(x, y)."""
    r = _check_pair(spec, x, y)
    return float(np.exp(-spec.s * r @ r))


def grad1(spec, x, y):
    """Gradient of K with respect to its first argument."""
    r = _check_pair(spec, x, y)
    return radial_derivatives(spec, r, 1)[1]


def grad2(spec, x, y):
    """Gradient of K with respect to its second argument."""
    return -grad1(spec, x, y)


def hess11(spec, x, y):
    r = _check_pair(spec, x, y)
    return radial_derivatives(spec, r, 2)[2]


def hess12(spec, x, y):
    """Mixed partials ``d^2 K / dx_i dy_j`` as a ``(d, d)`` matrix."""
    return -hess11(spec, x, y)


def hess22(spec, x, y):
    """Second partials with respect to the second argument."""
    return hess11(spec, x, y)


def third(spec, x, y):
    """Third mixed partials ``d^3 K / dx_i dy_j dy_k`` (index order i, j, k).

    Other placements differ only by sign: each derivative moved from y to x
    flips it.
    """
    r = _check_pair(spec, x, y)
    return radial_derivatives(spec, r, 3)[3]
