"""Endpoint similarity measures and their costates.

Two measures are provided:

* point matching with optional Jacobian targets,
  ``U = sum_k |x_k - y_k|^2 + |J_k - Y_k|_F^2``;
* a smoothed first-order image measure, which samples the moving image
  through the local affine approximation ``p -> B_k p + q_k`` of the inverse
  deformation around every control point ``x_k``:

      U = (1/N) sum_k sum_l w_l F(I_m(B_k p_l + q_k) - I_f(p_l + x_k)).

Images are indexed ``[row, col]`` and a point ``(x, y)`` maps to
``col = x / spacing``, ``row = y / spacing``.  Samples outside the grid are
clamped to the nearest edge pixel.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .adjoint import CoState
from .errors import InputError

SMOOTH_ABS_EPS = 1e-3


@dataclass(frozen=True)
class PointTargets:
    y: np.ndarray
    Y: Optional[np.ndarray] = None

    def __post_init__(self):
        y = np.atleast_2d(np.asarray(self.y, dtype=float))
        object.__setattr__(self, "y", y)
        if self.Y is not None:
            Y = np.asarray(self.Y, dtype=float).reshape(y.shape + (y.shape[1],))
            object.__setattr__(self, "Y", Y)
            if not np.all(np.isfinite(Y)):
                raise InputError("Jacobian targets must be finite")
        if not np.all(np.isfinite(y)):
            raise InputError("point targets must be finite")

    def __len__(self):
        return len(self.y)


def _check_counts(state, targets):
    if state.x.shape != targets.y.shape:
        raise InputError(
            f"{len(targets)} targets given for {state.x.shape[0]} points of dimension "
            f"{state.x.shape[1]}"
        )


def point_similarity(state, targets):
    _check_counts(state, targets)
    u = float(np.sum((state.x - targets.y) ** 2))
    if targets.Y is not None:
        u += float(np.sum((state.J - targets.Y) ** 2))
    return u


def point_similarity_costate(state, targets):
    _check_counts(state, targets)
    a_J = 2.0 * (state.J - targets.Y) if targets.Y is not None else np.zeros_like(state.J)
    return CoState(2.0 * (state.x - targets.y), a_J, np.zeros_like(state.mu), np.zeros_like(state.W))


@dataclass(frozen=True)
class ImageGrid:
    """Grayscale image with intensities in ``[0, 1]``, shape ``(height, width)``."""

    intensities: np.ndarray
    spacing: float = 1.0

    def __post_init__(self):
        a = np.asarray(self.intensities, dtype=float)
        if a.ndim != 2 or min(a.shape) < 2:
            raise InputError(f"image must be 2D with at least 2 pixels per axis, got {a.shape}")
        if not np.all(np.isfinite(a)) or a.min() < 0.0 or a.max() > 1.0:
            raise InputError("image intensities must be finite and lie in [0, 1]")
        if self.spacing <= 0:
            raise InputError("pixel spacing must be positive")
        object.__setattr__(self, "intensities", a)

    @classmethod
    def normalized(cls, array, spacing=1.0):
        """Rescale ``array`` linearly to ``[0, 1]`` (constant images map to 0)."""
        a = np.asarray(array, dtype=float)
        lo, hi = a.min(), a.max()
        a = (a - lo) / (hi - lo) if hi > lo else np.zeros_like(a)
        return cls(a, spacing)

    @property
    def height(self):
        return self.intensities.shape[0]

    @property
    def width(self):
        return self.intensities.shape[1]

    @property
    def extent(self):
        return ((self.width - 1) * self.spacing, (self.height - 1) * self.spacing)

    def sample(self, points, gradient=None):
        """Bilinear samples at ``points`` (..., 2).

        ``gradient`` is ``None``, ``"interpolant"`` (exact derivative of the
        bilinear interpolant, zero across clamped axes) or ``"central"``
        (central-difference gradient image, bilinearly interpolated).
        Returns ``(values, gradients, out_of_bounds_mask)``.
        """
        pts = np.asarray(points, dtype=float)
        I = self.intensities
        H, W = I.shape
        c = pts[..., 0] / self.spacing
        r = pts[..., 1] / self.spacing
        oob_c = (c < 0) | (c > W - 1)
        oob_r = (r < 0) | (r > H - 1)
        c = np.clip(c, 0.0, W - 1.0)
        r = np.clip(r, 0.0, H - 1.0)
        c0 = np.minimum(np.floor(c).astype(int), W - 2)
        r0 = np.minimum(np.floor(r).astype(int), H - 2)
        fc = c - c0
        fr = r - r0
        vals = _bilinear(I, r0, c0, fr, fc)
        grad = None
        if gradient == "interpolant":
            i00, i01 = I[r0, c0], I[r0, c0 + 1]
            i10, i11 = I[r0 + 1, c0], I[r0 + 1, c0 + 1]
            gc = (1 - fr) * (i01 - i00) + fr * (i11 - i10)
            gr = (1 - fc) * (i10 - i00) + fc * (i11 - i01)
            gc = np.where(oob_c, 0.0, gc)
            gr = np.where(oob_r, 0.0, gr)
            grad = np.stack([gc, gr], axis=-1) / self.spacing
        elif gradient == "central":
            gr_img, gc_img = np.gradient(I)
            gc = _bilinear(gc_img, r0, c0, fr, fc)
            gr = _bilinear(gr_img, r0, c0, fr, fc)
            grad = np.stack([gc, gr], axis=-1) / self.spacing
        elif gradient is not None:
            raise InputError(f"unknown gradient scheme {gradient!r}")
        return vals, grad, oob_c | oob_r


def _bilinear(I, r0, c0, fr, fc):
    return (1 - fr) * ((1 - fc) * I[r0, c0] + fc * I[r0, c0 + 1]) + fr * (
        (1 - fc) * I[r0 + 1, c0] + fc * I[r0 + 1, c0 + 1]
    )


@dataclass(frozen=True)
class SamplingStencil:
    offsets: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.offsets, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if p.ndim != 2 or w.shape != (len(p),) or len(p) == 0:
            raise InputError("stencil offsets must be (P, d) with P matching weights")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise InputError("stencil weights must be positive and sum to 1")
        object.__setattr__(self, "offsets", p)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return len(self.weights)


def _gaussian_weights(kernel, offsets):
    w = np.exp(-np.sum(offsets**2, axis=1) / kernel.sigma**2)
    return w / w.sum()


def build_stencil(kernel, radius_factor=2.0, spacing=1.0):
    """Lattice offsets inside the disc of radius ``radius_factor * sigma``.

    Weights follow the smoothing Gaussian (same scale as ``kernel``) and are
    normalised to sum to one.
    """
    if radius_factor <= 0 or spacing <= 0:
        raise InputError("radius_factor and spacing must be positive")
    radius = radius_factor * kernel.sigma
    if radius < spacing:
        raise InputError(f"stencil radius {radius} is smaller than its spacing {spacing}")
    m = int(np.floor(radius / spacing))
    axis = spacing * np.arange(-m, m + 1)
    grids = np.meshgrid(*([axis] * kernel.dim), indexing="xy")
    offsets = np.stack([g.ravel() for g in grids], axis=1)
    offsets = offsets[np.sum(offsets**2, axis=1) <= radius**2 * (1 + 1e-12)]
    return SamplingStencil(offsets, _gaussian_weights(kernel, offsets))


def random_stencil(kernel, n_pairs, radius_factor=2.0, seed=0):
    """Seeded random offsets, uniform in the disc, in ``+p / -p`` pairs."""
    if n_pairs < 1:
        raise InputError("need at least one offset pair")
    rng = np.random.default_rng(seed)
    radius = radius_factor * kernel.sigma
    d = kernel.dim
    u = rng.normal(size=(n_pairs, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    rad = radius * rng.uniform(size=(n_pairs, 1)) ** (1.0 / d)
    half = u * rad
    offsets = np.concatenate([half, -half])
    return SamplingStencil(offsets, _gaussian_weights(kernel, offsets))


def residual_function(name):
    """Return ``(F, dF)`` for a residual name."""
    if name == "squared":
        return (lambda r: r * r), (lambda r: 2.0 * r)
    if name == "smooth_abs":
        eps = SMOOTH_ABS_EPS
        return (lambda r: np.sqrt(r * r + eps * eps) - eps), (
            lambda r: r / np.sqrt(r * r + eps * eps)
        )
    raise InputError(f"unknown residual function {name!r}")


@dataclass(frozen=True)
class ImageSimilarityReport:
    value: float
    out_of_bounds: float


def _image_samples(endpoint, moving, fixed, control_points, stencil, gradient):
    xk = np.asarray(control_points, dtype=float)
    if xk.shape != endpoint.x.shape or xk.shape[1] != 2:
        raise InputError("control points must match the endpoint atoms and be 2D")
    p = stencil.offsets
    q, B = endpoint.x, endpoint.J
    sm = np.einsum("kij,lj->kli", B, p) + q[:, None, :]
    sf = p[None, :, :] + xk[:, None, :]
    im, gm, oob_m = moving.sample(sm, gradient)
    iff, _, oob_f = fixed.sample(sf)
    return im - iff, gm, oob_m | oob_f


def image_similarity_report(endpoint, moving, fixed, control_points, stencil, F="squared"):
    Ff, _ = residual_function(F)
    r, _, oob = _image_samples(endpoint, moving, fixed, control_points, stencil, None)
    n = len(control_points)
    value = float(np.sum(Ff(r) @ stencil.weights) / n)
    return ImageSimilarityReport(value, float(np.mean(oob)))


def image_similarity(endpoint, moving, fixed, control_points, stencil, F="squared"):
    return image_similarity_report(endpoint, moving, fixed, control_points, stencil, F).value


def image_similarity_costate(
    endpoint, moving, fixed, control_points, stencil, F="squared", gradient="interpolant"
):
    """Derivatives of :func:`image_similarity` with respect to ``q_k`` and ``B_k``."""
    _, dF = residual_function(F)
    r, gm, _ = _image_samples(endpoint, moving, fixed, control_points, stencil, gradient)
    n = len(control_points)
    coef = dF(r) * stencil.weights[None, :] / n
    a_x = np.einsum("kl,kli->ki", coef, gm)
    a_J = np.einsum("kl,kli,lj->kij", coef, gm, stencil.offsets)
    return CoState(a_x, a_J, np.zeros_like(endpoint.mu), np.zeros_like(endpoint.W))
