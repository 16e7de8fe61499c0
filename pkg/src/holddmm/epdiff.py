"""Geodesic shooting for zeroth- and first-order momenta.

Each atom carries its trajectory ``x``, the Jacobian ``J`` of the flow at its
initial position, and the pulled-back momenta ``mu`` and ``W`` (columns
``mu^j``).  These form a canonical Hamiltonian system with coordinates
``(x, J)``, conjugate momenta ``(mu, W)`` and Hamiltonian ``||v||_V^2 / 2``,
where the velocity uses the Eulerian coefficients ``mu`` and ``W J^T``:

    dx/dt  = v(x)
    dJ/dt  = Dv(x) J
    dmu/dt = -Dv(x)^T mu - sum_ij (W J^T)_ij d_j grad v_i(x)
    dW/dt  = -Dv(x)^T W

The last equation keeps ``J^T W`` constant, i.e. ``W = J^{-T} Z_0``.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import InputError, IntegrationError
from .kernel import radial_derivatives
from .momenta import _contract, energy_arrays, field_derivatives

DEFAULT_STEPS = 50
FORWARD = "forward"
REVERSED = "reversed"


@dataclass(frozen=True)
class ShootState:
    """Per-atom state at time ``t``; arrays are stacked over atoms."""

    t: float
    x: np.ndarray
    J: np.ndarray
    mu: np.ndarray
    W: np.ndarray

    @property
    def n_atoms(self):
        return self.x.shape[0]

    @property
    def dim(self):
        return self.x.shape[1]

    @property
    def Zt(self):
        """Eulerian first-order coefficients ``W J^T`` (columns z_t^j)."""
        return eulerian_first_order(self.J, self.W)

    def as_vector(self):
        return pack(self.x, self.J, self.mu, self.W)

    @classmethod
    def from_vector(cls, t, y, n, d):
        return cls(t, *unpack(y, n, d))


def eulerian_first_order(J, W):
    return np.einsum("kij,klj->kil", W, J)


def pack(x, J, mu, W):
    """Flatten a state as ``[x, J, mu, W]`` (coordinates first, then momenta)."""
    return np.concatenate([np.ravel(x), np.ravel(J), np.ravel(mu), np.ravel(W)])


def unpack(y, n, d):
    a, b = n * d, n * d * d
    x = y[:a].reshape(n, d)
    J = y[a : a + b].reshape(n, d, d)
    mu = y[a + b : 2 * a + b].reshape(n, d)
    W = y[2 * a + b :].reshape(n, d, d)
    return x, J, mu, W


def init_state(config):
    """State at the start of a shot: identity Jacobians and ``mu = z``, ``W = Z``."""
    n, d = config.n_atoms, config.dim
    return ShootState(
        0.0, config.positions, np.tile(np.eye(d), (n, 1, 1)), config.z, config.Z
    )


def _rhs_arrays(kernel, x, J, mu, W):
    Zt = eulerian_first_order(J, W)
    gs = radial_derivatives(kernel, x[:, None, :] - x[None, :, :], 3)
    v, Dv, D2v = _contract(gs, mu, Zt, 2)
    xdot = v
    Jdot = Dv @ J
    mudot = -np.einsum("kji,kj->ki", Dv, mu) - np.einsum("kij,kijc->kc", Zt, D2v)
    Wdot = -np.swapaxes(Dv, 1, 2) @ W
    return xdot, Jdot, mudot, Wdot


def rhs_vector(kernel, y, n, d):
    return pack(*_rhs_arrays(kernel, *unpack(y, n, d)))


def _check_state(x, J, mu, W, step):
    if not (
        np.all(np.isfinite(x))
        and np.all(np.isfinite(J))
        and np.all(np.isfinite(mu))
        and np.all(np.isfinite(W))
    ):
        raise IntegrationError("non-finite state", step)
    dets = np.linalg.det(J)
    if np.any(dets <= 0):
        k = int(np.argmin(dets))
        raise IntegrationError(
            f"Jacobian of atom {k} lost positive determinant", step, index=k
        )


def _check_compatible(state, config):
    if state.x.shape != (config.n_atoms, config.dim):
        raise InputError(
            f"state with {state.x.shape} positions does not match configuration of "
            f"{config.n_atoms} atoms in dimension {config.dim}"
        )


def rhs(state, config):
    """Time derivative of ``state`` as a :class:`ShootState` (``t`` carried over)."""
    _check_compatible(state, config)
    _check_state(state.x, state.J, state.mu, state.W, None)
    return ShootState(state.t, *_rhs_arrays(config.kernel, state.x, state.J, state.mu, state.W))


def rk4_stages(f, y, h):
    """Stage points and slopes of one classical RK4 step."""
    k1 = f(y)
    y2 = y + 0.5 * h * k1
    k2 = f(y2)
    y3 = y + 0.5 * h * k2
    k3 = f(y3)
    y4 = y + h * k3
    k4 = f(y4)
    return (y, y2, y3, y4), (k1, k2, k3, k4)


def rk4_combine(y, ks, h):
    k1, k2, k3, k4 = ks
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass(frozen=True)
class GeodesicPath:
    """States of a shot at the uniformly spaced integrator nodes.

    ``states`` is stored as a ``(steps + 1, n_state)`` array of packed
    vectors.  For a reversed shot, node ``i`` sits at time ``1 - i / steps``.
    """

    config: object
    vectors: np.ndarray
    direction: str = FORWARD
    stage_vectors: Optional[np.ndarray] = None

    @property
    def steps(self):
        return self.vectors.shape[0] - 1

    @property
    def h(self):
        return (1.0 if self.direction == FORWARD else -1.0) / self.steps

    @property
    def times(self):
        t = np.linspace(0.0, 1.0, self.steps + 1)
        return t if self.direction == FORWARD else 1.0 - t

    def state(self, i):
        return ShootState.from_vector(
            self.times[i], self.vectors[i], self.config.n_atoms, self.config.dim
        )

    @property
    def states(self):
        return [self.state(i) for i in range(self.steps + 1)]

    @property
    def endpoint(self):
        return self.state(self.steps)

    def rhs_function(self):
        kernel, n, d = self.config.kernel, self.config.n_atoms, self.config.dim
        return lambda y: rhs_vector(kernel, y, n, d)

    def stages(self, i):
        """RK4 stage states of step ``i`` (node ``i`` to ``i + 1``)."""
        if self.stage_vectors is not None:
            return tuple(self.stage_vectors[i])
        return rk4_stages(self.rhs_function(), self.vectors[i], self.h)[0]

    def energies(self):
        """Instantaneous ``||v_t||_V^2`` at every node."""
        out = []
        for s in self.states:
            out.append(energy_arrays(self.config.kernel, s.x, s.mu, s.Zt))
        return np.array(out)

    def constraint_drift(self):
        """Largest Frobenius deviation of ``J^T W`` from ``Z_0`` over atoms and nodes."""
        Z0 = self.config.Z
        drift = 0.0
        for s in self.states:
            dev = np.swapaxes(s.J, 1, 2) @ s.W - Z0
            drift = max(drift, float(np.max(np.sqrt(np.sum(dev**2, axis=(1, 2))))))
        return drift


def integrate_state(config, y0, steps, h):
    """RK4-integrate a packed state; returns node and stage vectors."""
    n, d = config.n_atoms, config.dim
    f = lambda y: rhs_vector(config.kernel, y, n, d)  # noqa: E731
    out = np.empty((steps + 1, y0.size))
    stages = np.empty((steps, 4, y0.size))
    out[0] = y0
    y = y0
    for i in range(steps):
        # blow-ups are reported by _check_state, not as numpy warnings
        with np.errstate(over="ignore", invalid="ignore"):
            Ys, ks = rk4_stages(f, y, h)
            y = rk4_combine(y, ks, h)
        stages[i] = Ys
        _check_state(*unpack(y, n, d), i + 1)
        out[i + 1] = y
    return out, stages


def shoot(config, steps=DEFAULT_STEPS, direction=FORWARD):
    """Integrate the geodesic equations from ``config`` with fixed-step RK4.

    With ``direction="reversed"`` the configuration is taken to live at
    ``t = 1`` and the same equations are integrated with a negative step, so
    the endpoint holds ``phi^{-1}(x_k)`` and ``D phi^{-1}(x_k)``.
    """
    if steps < 1:
        raise InputError("steps must be a positive integer")
    if direction not in (FORWARD, REVERSED):
        raise InputError(f"unknown direction {direction!r}")
    h = (1.0 if direction == FORWARD else -1.0) / steps
    vectors, stages = integrate_state(config, init_state(config).as_vector(), steps, h)
    return GeodesicPath(config, vectors, direction, stages)


class PassiveFlow(NamedTuple):
    points: np.ndarray
    jacobians: Optional[np.ndarray]


def _passive_rhs(kernel, n, d, y_atoms, pts, F):
    x, J, mu, W = unpack(y_atoms, n, d)
    want = 1 if F is not None else 0
    fields = field_derivatives(kernel, x, mu, eulerian_first_order(J, W), pts, want)
    return fields[0], (fields[1] @ F if F is not None else None)


def _check_passive(pts, F, step):
    if not np.all(np.isfinite(pts)) or (F is not None and not np.all(np.isfinite(F))):
        raise IntegrationError("non-finite passive flow", step)
    if F is not None:
        dets = np.linalg.det(F)
        if np.any(dets <= 0):
            p = int(np.argmin(dets))
            raise IntegrationError(
                f"passive Jacobian at point {p} lost positive determinant", step, index=p
            )


def flow_passive(path, points, with_jacobians=False):
    """Carry arbitrary points (and optionally their Jacobians) along ``path``.

    Uses the same RK4 node grid as the shot; the velocity at each substep is
    built from the recomputed atom stage states.
    """
    config = path.config
    kernel, n, d = config.kernel, config.n_atoms, config.dim
    pts = np.array(points, dtype=float).reshape(-1, d)
    F = np.tile(np.eye(d), (len(pts), 1, 1)) if with_jacobians else None
    h = path.h
    traj = np.empty((path.steps + 1,) + pts.shape)
    jac = np.empty((path.steps + 1,) + F.shape) if with_jacobians else None
    traj[0] = pts
    if with_jacobians:
        jac[0] = F
    for i in range(path.steps):
        Ys = path.stages(i)
        coef = (0.0, 0.5 * h, 0.5 * h, h)
        kp, kF = [], []
        for Y, c in zip(Ys, coef):
            p_stage = pts + c * kp[-1] if kp else pts
            F_stage = (F + c * kF[-1] if kF else F) if with_jacobians else None
            dp, dF = _passive_rhs(kernel, n, d, Y, p_stage, F_stage)
            kp.append(dp)
            if with_jacobians:
                kF.append(dF)
        pts = rk4_combine(pts, kp, h)
        if with_jacobians:
            F = rk4_combine(F, kF, h)
        _check_passive(pts, F, i + 1)
        traj[i + 1] = pts
        if with_jacobians:
            jac[i + 1] = F
    return PassiveFlow(traj, jac)


def flow_prescribed(config_at, points, steps=DEFAULT_STEPS, with_jacobians=False):
    """Flow points through a prescribed time-dependent field on ``[0, 1]``.

    ``config_at(t)`` returns the :class:`MomentumConfig` generating the
    velocity at time ``t``.  Returns the endpoint positions and, optionally,
    Jacobians.
    """
    cfg0 = config_at(0.0)
    d = cfg0.dim
    pts = np.array(points, dtype=float).reshape(-1, d)
    F = np.tile(np.eye(d), (len(pts), 1, 1)) if with_jacobians else None
    h = 1.0 / steps

    def field(t, p, G):
        cfg = config_at(t)
        out = field_derivatives(cfg.kernel, cfg.positions, cfg.z, cfg.Z, p, 1)
        return out[0], (out[1] @ G if G is not None else None)

    for i in range(steps):
        t = i * h
        k1, K1 = field(t, pts, F)
        k2, K2 = field(t + h / 2, pts + h / 2 * k1, F + h / 2 * K1 if F is not None else None)
        k3, K3 = field(t + h / 2, pts + h / 2 * k2, F + h / 2 * K2 if F is not None else None)
        k4, K4 = field(t + h, pts + h * k3, F + h * K3 if F is not None else None)
        pts = rk4_combine(pts, (k1, k2, k3, k4), h)
        if F is not None:
            F = rk4_combine(F, (K1, K2, K3, K4), h)
        _check_passive(pts, F, i + 1)
    return PassiveFlow(pts, F)
