"""Variations of the shooting system and backward transpose transport.

The linearised right-hand side is obtained by differentiating the kernel
sums analytically (this needs kernel derivatives up to order four).  Because
the shooting equations are a canonical Hamiltonian vector field
``f = Jsymp grad H`` in the packed coordinates ``[x, J | mu, W]``, the
transposed linearisation is available from the forward one:

    Df^T a = S u,  with u = (-a_p, a_q) and S u = (-(Df u)_p, (Df u)_q).

Gradients are the exact discrete adjoint of the RK4 scheme used by
:func:`holddmm.epdiff.shoot`, so they agree with finite differences of the
discretised objective to rounding error.
"""

from dataclasses import dataclass

import numpy as np

from .epdiff import (
    GeodesicPath,
    ShootState,
    eulerian_first_order,
    pack,
    shoot,
    unpack,
)
from .errors import InputError
from .kernel import radial_derivatives
from .momenta import _contract, energy, energy_gradient, energy_position_gradient


@dataclass(frozen=True)
class CoState:
    """Derivative of an endpoint functional with respect to the state variables."""

    a_x: np.ndarray
    a_J: np.ndarray
    a_mu: np.ndarray
    a_W: np.ndarray

    @classmethod
    def zeros(cls, n, d):
        return cls(np.zeros((n, d)), np.zeros((n, d, d)), np.zeros((n, d)), np.zeros((n, d, d)))

    def as_vector(self):
        return pack(self.a_x, self.a_J, self.a_mu, self.a_W)

    def __add__(self, other):
        return CoState(
            self.a_x + other.a_x, self.a_J + other.a_J,
            self.a_mu + other.a_mu, self.a_W + other.a_W,
        )

    def scaled(self, alpha):
        return CoState(alpha * self.a_x, alpha * self.a_J, alpha * self.a_mu, alpha * self.a_W)


@dataclass(frozen=True)
class MomentumGradient:
    g_z: np.ndarray
    g_Z: np.ndarray
    g_x: np.ndarray = None

    def as_vector(self):
        """Flattened ``(z, Z)`` part, matching :func:`coefficient_vector`."""
        return np.concatenate([self.g_z.ravel(), self.g_Z.ravel()])

    def __add__(self, other):
        gx = None
        if self.g_x is not None and other.g_x is not None:
            gx = self.g_x + other.g_x
        return MomentumGradient(self.g_z + other.g_z, self.g_Z + other.g_Z, gx)

    def scaled(self, alpha):
        gx = None if self.g_x is None else alpha * self.g_x
        return MomentumGradient(alpha * self.g_z, alpha * self.g_Z, gx)


def coefficient_vector(config):
    return np.concatenate([config.z.ravel(), config.Z.ravel()])


def config_from_coefficients(config, c):
    n, d = config.n_atoms, config.dim
    return config.with_coefficients(c[: n * d].reshape(n, d), c[n * d :].reshape(n, d, d))


def _jvp_arrays(kernel, x, J, mu, W, dx, dJ, dmu, dW):
    Zt = eulerian_first_order(J, W)
    dZt = eulerian_first_order(J, dW) + eulerian_first_order(dJ, W)
    gs = radial_derivatives(kernel, x[:, None, :] - x[None, :, :], 4)
    dr = dx[:, None, :] - dx[None, :, :]
    dgs = [np.einsum("kl...c,klc->kl...", gs[i + 1], dr) for i in range(4)]
    v, Dv, D2v = _contract(gs, mu, Zt, 2)
    coef = _contract(gs, dmu, dZt, 2)
    geom = _contract(dgs, mu, Zt, 2)
    dv, dDv, dD2v = (a + b for a, b in zip(coef, geom))
    dxdot = dv
    dJdot = dDv @ J + Dv @ dJ
    dmudot = (
        -np.einsum("kji,kj->ki", dDv, mu)
        - np.einsum("kji,kj->ki", Dv, dmu)
        - np.einsum("kij,kijc->kc", dZt, D2v)
        - np.einsum("kij,kijc->kc", Zt, dD2v)
    )
    dWdot = -np.swapaxes(dDv, 1, 2) @ W - np.swapaxes(Dv, 1, 2) @ dW
    return dxdot, dJdot, dmudot, dWdot


def jvp_vector(kernel, y, dy, n, d):
    return pack(*_jvp_arrays(kernel, *unpack(y, n, d), *unpack(dy, n, d)))


def vjp_vector(kernel, y, a, n, d):
    """Transpose of the linearised right-hand side applied to ``a``."""
    half = n * d + n * d * d
    u = np.concatenate([-a[half:], a[:half]])
    w = jvp_vector(kernel, y, u, n, d)
    return np.concatenate([-w[half:], w[:half]])


def _state_like(config, obj):
    if isinstance(obj, (ShootState, CoState)):
        vec = obj.as_vector()
    else:
        vec = np.asarray(obj, dtype=float).ravel()
    n, d = config.n_atoms, config.dim
    if vec.size != 2 * n * (d + d * d):
        raise InputError(f"state vector of size {vec.size} does not match configuration")
    return vec


def linearized_rhs(state, delta, config):
    """Directional derivative of the shooting right-hand side at ``state``.

    ``delta`` is a :class:`ShootState` (its ``t`` is ignored) or a packed
    vector; the result is returned as a :class:`ShootState`.
    """
    y = _state_like(config, state)
    dy = _state_like(config, delta)
    n, d = config.n_atoms, config.dim
    return ShootState.from_vector(state.t, jvp_vector(config.kernel, y, dy, n, d), n, d)


def transposed_rhs(state, costate, config):
    """Action of the transposed linearisation on ``costate`` (returned as a CoState)."""
    y = _state_like(config, state)
    a = _state_like(config, costate)
    n, d = config.n_atoms, config.dim
    return CoState(*unpack(vjp_vector(config.kernel, y, a, n, d), n, d))


def initial_variation(config, dz=None, dZ=None, dx0=None):
    """Packed variation of the initial state induced by varying ``(x0, z, Z)``."""
    n, d = config.n_atoms, config.dim
    dx0 = np.zeros((n, d)) if dx0 is None else dx0
    dz = np.zeros((n, d)) if dz is None else dz
    dZ = np.zeros((n, d, d)) if dZ is None else dZ
    return pack(dx0, np.zeros((n, d, d)), dz, dZ)


def forward_variation(path, delta0):
    """Propagate an initial-state variation to the endpoint (tangent RK4)."""
    config = path.config
    kernel, n, d = config.kernel, config.n_atoms, config.dim
    dy = _state_like(config, delta0).copy()
    h = path.h
    for i in range(path.steps):
        Ys = path.stages(i)
        dk1 = jvp_vector(kernel, Ys[0], dy, n, d)
        dk2 = jvp_vector(kernel, Ys[1], dy + 0.5 * h * dk1, n, d)
        dk3 = jvp_vector(kernel, Ys[2], dy + 0.5 * h * dk2, n, d)
        dk4 = jvp_vector(kernel, Ys[3], dy + h * dk3, n, d)
        dy = dy + (h / 6.0) * (dk1 + 2.0 * dk2 + 2.0 * dk3 + dk4)
    return ShootState.from_vector(path.times[-1], dy, n, d)


def backward_transport_vector(path, endpoint):
    config = path.config
    kernel, n, d = config.kernel, config.n_atoms, config.dim
    lam = _state_like(config, endpoint).copy()
    h = path.h
    for i in reversed(range(path.steps)):
        Ys = path.stages(i)
        l1 = (h / 6.0) * lam
        l2 = (h / 3.0) * lam
        l3 = (h / 3.0) * lam
        l4 = (h / 6.0) * lam
        m4 = vjp_vector(kernel, Ys[3], l4, n, d)
        l3 = l3 + h * m4
        m3 = vjp_vector(kernel, Ys[2], l3, n, d)
        l2 = l2 + 0.5 * h * m3
        m2 = vjp_vector(kernel, Ys[1], l2, n, d)
        l1 = l1 + 0.5 * h * m2
        m1 = vjp_vector(kernel, Ys[0], l1, n, d)
        lam = lam + m1 + m2 + m3 + m4
    return lam


def backward_transport(path, endpoint):
    """Pull an endpoint costate back to a gradient in the initial momenta.

    Satisfies ``<result, delta> = <endpoint, forward_variation(path, delta)>``
    for every initial variation ``delta``.
    """
    if not isinstance(path, GeodesicPath):
        raise InputError("backward_transport needs a GeodesicPath")
    n, d = path.config.n_atoms, path.config.dim
    x, _, mu, W = unpack(backward_transport_vector(path, endpoint), n, d)
    return MomentumGradient(mu, W, x)


@dataclass(frozen=True)
class Evaluation:
    objective: float
    energy: float
    similarity: float
    path: GeodesicPath


def evaluate_objective(config, problem):
    """Shoot ``config`` and evaluate ``energy + lam * U(endpoint)``.

    ``problem`` must provide ``lam``, ``steps``, ``direction``,
    ``similarity(state)`` and ``costate(state)``.
    """
    path = shoot(config, problem.steps, problem.direction)
    e1 = energy(config)
    u = float(problem.similarity(path.endpoint))
    return Evaluation(e1 + problem.lam * u, e1, u, path)


def objective_gradient(config, problem, evaluation=None):
    """Objective value and its gradient with respect to ``(z, Z)`` (and ``x0``)."""
    if problem.lam < 0:
        raise InputError("lambda must be non-negative")
    ev = evaluation if evaluation is not None else evaluate_objective(config, problem)
    gz, gZ = energy_gradient(config)
    grad = MomentumGradient(gz, gZ, energy_position_gradient(config))
    if problem.lam != 0:
        costate = problem.costate(ev.path.endpoint)
        grad = grad + backward_transport(ev.path, costate).scaled(problem.lam)
    return ev.objective, grad
