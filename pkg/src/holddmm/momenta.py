"""Zeroth- and first-order momentum atoms and the velocity fields they generate.

An atom at ``x`` with coefficients ``(z, Z)`` represents the functional

    v  ->  z . v(x) + sum_j Z[:, j] . d_j v(x)

and, through the (derivative) reproducing property, the velocity field

    v(y) = K(y, x) z + sum_j d/dx_j K(x, y) Z[:, j].

The derivative is taken with respect to the atom position, so ``Lin(0, Id)``
is an expansion.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InputError
from .kernel import KernelSpec, radial_derivatives


@dataclass(frozen=True)
class Atom:
    x0: np.ndarray
    z: np.ndarray
    Z: np.ndarray

    def __post_init__(self):
        x0 = np.array(self.x0, dtype=float)
        z = np.array(self.z, dtype=float)
        if x0.ndim != 1:
            raise InputError(f"atom position must be a vector, got shape {x0.shape}")
        d = x0.shape[0]
        Z = np.zeros((d, d)) if self.Z is None else np.array(self.Z, dtype=float)
        if z.shape != x0.shape or Z.shape != (d, d):
            raise InputError(
                f"inconsistent atom shapes x0={x0.shape}, z={z.shape}, Z={Z.shape}"
            )
        if not (np.all(np.isfinite(x0)) and np.all(np.isfinite(z)) and np.all(np.isfinite(Z))):
            raise InputError("atom entries must be finite")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "Z", Z)


def make_translation_atom(x, b):
    """Tsl_x(b): a pure zeroth-order atom."""
    b = np.asarray(b, dtype=float)
    return Atom(x, b, np.zeros((b.size, b.size)))


def make_linear_atom(x, M):
    """Lin_x(M): a pure first-order atom with columns of ``M`` as coefficients."""
    M = np.asarray(M, dtype=float)
    return Atom(x, np.zeros(M.shape[0]), M)


@dataclass(frozen=True)
class MomentumConfig:
    """A kernel together with an ordered, non-empty list of atoms."""

    kernel: KernelSpec
    atoms: tuple

    def __post_init__(self):
        atoms = tuple(self.atoms)
        if not atoms:
            raise InputError("a momentum configuration needs at least one atom")
        for a in atoms:
            if a.x0.shape != (self.kernel.dim,):
                raise InputError(
                    f"atom dimension {a.x0.shape[0]} does not match kernel dimension "
                    f"{self.kernel.dim}"
                )
        object.__setattr__(self, "atoms", atoms)

    @classmethod
    def from_arrays(cls, kernel, x0, z, Z=None):
        x0 = np.atleast_2d(np.asarray(x0, dtype=float))
        z = np.asarray(z, dtype=float).reshape(x0.shape)
        if Z is None:
            Z = np.zeros(x0.shape + (x0.shape[1],))
        Z = np.asarray(Z, dtype=float).reshape(x0.shape + (x0.shape[1],))
        return cls(kernel, tuple(Atom(x0[k], z[k], Z[k]) for k in range(len(x0))))

    def with_coefficients(self, z, Z):
        return MomentumConfig.from_arrays(self.kernel, self.positions, z, Z)

    @property
    def n_atoms(self):
        return len(self.atoms)

    @property
    def dim(self):
        return self.kernel.dim

    @property
    def positions(self):
        return np.stack([a.x0 for a in self.atoms])

    @property
    def z(self):
        return np.stack([a.z for a in self.atoms])

    @property
    def Z(self):
        return np.stack([a.Z for a in self.atoms])


def _contract(gs, mu, Zt, order):
    """Combine kernel-derivative tensors with atom coefficients.

    ``gs[k]`` holds the k-th derivative of g at r = y_p - x_n, shape
    ``(P, N) + (d,) * k``.  Returns v and, up to ``order``, Dv and D^2 v
    (index layout ``[p, i, j]`` = d_j v_i and ``[p, i, j, c]`` = d_j d_c v_i).
    """
    out = [np.einsum("pn,ni->pi", gs[0], mu) - np.einsum("nij,pnj->pi", Zt, gs[1])]
    if order >= 1:
        out.append(
            np.einsum("ni,pnj->pij", mu, gs[1]) - np.einsum("nim,pnmj->pij", Zt, gs[2])
        )
    if order >= 2:
        out.append(
            np.einsum("ni,pnjc->pijc", mu, gs[2])
            - np.einsum("nim,pnmjc->pijc", Zt, gs[3])
        )
    return out


def field_derivatives(kernel, centers, mu, Zt, points, order=1):
    """Velocity field of atoms at ``centers`` and its spatial derivatives.

    ``mu`` (N, d) and ``Zt`` (N, d, d) are the current zeroth- and first-order
    coefficients; ``points`` has shape (P, d).  Returns ``[v, Dv, D2v][:order+1]``.
    """
    r = points[:, None, :] - centers[None, :, :]
    gs = radial_derivatives(kernel, r, order + 1)
    return _contract(gs, mu, Zt, order)


def _as_points(config, y):
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    y = np.atleast_2d(y)
    if y.shape[-1] != config.dim:
        raise InputError(f"points must have dimension {config.dim}, got {y.shape[-1]}")
    return y, single


def velocity(config, y):
    """Velocity generated by ``config`` at ``y`` (a point or an array of points)."""
    pts, single = _as_points(config, y)
    v = field_derivatives(config.kernel, config.positions, config.z, config.Z, pts, 0)[0]
    return v[0] if single else v


def velocity_jacobian(config, y):
    """Spatial Jacobian ``Dv[i, j] = d_j v_i`` at ``y``."""
    pts, single = _as_points(config, y)
    Dv = field_derivatives(config.kernel, config.positions, config.z, config.Z, pts, 1)[1]
    return Dv[0] if single else Dv


def energy_arrays(kernel, x, mu, Zt):
    """||v||_V^2 for atoms at ``x`` with coefficients ``mu`` and ``Zt``."""
    v, Dv = field_derivatives(kernel, x, mu, Zt, x, 1)
    return float(np.einsum("ki,ki->", mu, v) + np.einsum("kij,kij->", Zt, Dv))


def energy(config):
    """Squared V-norm of the velocity generated by ``config``.

    Evaluated as the momentum applied to its own velocity field, which expands
    into the zeroth-order, cross and first-order kernel blocks.
    """
    return energy_arrays(config.kernel, config.positions, config.z, config.Z)


def energy_gradient(config):
    """Derivatives of :func:`energy` with respect to ``z`` and ``Z``.

    The energy is a quadratic form in the coefficients, so the gradient is
    twice the field (and its Jacobian) evaluated at the atoms.
    """
    x = config.positions
    v, Dv = field_derivatives(config.kernel, x, config.z, config.Z, x, 1)
    return 2.0 * v, 2.0 * Dv


def energy_position_gradient(config):
    """Derivative of :func:`energy` with respect to the atom positions."""
    x, z, Z = config.positions, config.z, config.Z
    _, Dv, D2v = field_derivatives(config.kernel, x, z, Z, x, 2)
    return 2.0 * (np.einsum("kji,kj->ki", Dv, z) + np.einsum("kij,kijc->kc", Z, D2v))


def affine_velocity_config(kernel, A, b, t):
    """Single-atom configuration approximating the affine flow ``x -> A x + b``.

    Along the path psi_t = expm(t logm A), x -> psi_t x + b t, the generator
    is M = logm A (constant) and the centre moves as b t.  The first-order
    coefficient is rescaled by sigma^2 / 2 so that the atom's velocity Jacobian
    at its centre equals M exactly.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.linalg.det(A) <= 0:
        raise InputError("affine target must have positive determinant")
    M = scipy.linalg.logm(A)
    if np.iscomplexobj(M):
        if np.max(np.abs(M.imag)) > 1e-12:
            raise InputError("affine target has no real logarithm")
        M = M.real
    atom = Atom(b * t, b, 0.5 * kernel.sigma**2 * M)
    return MomentumConfig(kernel, (atom,))
