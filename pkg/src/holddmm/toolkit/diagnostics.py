"""Deformation diagnostics: log-Jacobian and strain fields, atom divergence.

Fields live on regular grids.  Values are stored with one array axis per
spatial axis in coordinate order, so ``values[i, j]`` belongs to the point
``origin + spacing * (i, j)``.
"""

from dataclasses import dataclass

import numpy as np

from ..epdiff import FORWARD, flow_passive
from ..errors import InputError, IntegrationError
from ..momenta import velocity_jacobian


@dataclass(frozen=True)
class GridSpec:
    """Regular grid with ``shape[a]`` nodes along axis ``a``."""

    origin: tuple
    spacing: float
    shape: tuple

    def __post_init__(self):
        origin = tuple(float(o) for o in self.origin)
        shape = tuple(int(n) for n in self.shape)
        if len(origin) != len(shape) or len(shape) not in (2, 3):
            raise InputError("grid origin and shape must both have 2 or 3 entries")
        if min(shape) < 2:
            raise InputError(f"grid needs at least 2 nodes per axis, got {shape}")
        if not (np.isfinite(self.spacing) and self.spacing > 0):
            raise InputError("grid spacing must be positive")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "shape", shape)

    @classmethod
    def around(cls, center, half_width, n):
        """Square (cubic) grid of ``n`` nodes per axis spanning ``center +- half_width``."""
        center = np.asarray(center, dtype=float)
        spacing = 2.0 * half_width / (n - 1)
        return cls(tuple(center - half_width), spacing, (n,) * center.size)

    @property
    def dim(self):
        return len(self.shape)

    def axes(self):
        return [o + self.spacing * np.arange(n) for o, n in zip(self.origin, self.shape)]

    def points(self):
        """Node coordinates, shape ``(prod(shape), dim)``, first axis slowest."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass(frozen=True)
class ScalarField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise InputError("field values must be finite")
        object.__setattr__(self, "values", v)

    def rows(self):
        """``(coordinates..., value)`` rows in grid order."""
        return np.column_stack([self.grid.points(), self.values.ravel()])


@dataclass(frozen=True)
class GridFlow:
    grid: GridSpec
    points: np.ndarray  # warped node positions, (P, d)
    jacobians: np.ndarray  # (P, d, d)


def flow_grid(path, grid):
    """Carry the grid nodes along ``path`` together with their Jacobians."""
    if grid.dim != path.config.dim:
        raise InputError("grid dimension does not match the path")
    nodes = grid.points()
    try:
        flow = flow_passive(path, nodes, with_jacobians=True)
    except IntegrationError as exc:
        if exc.index is None:
            raise
        where = ", ".join(f"{c:.6g}" for c in nodes[exc.index])
        raise IntegrationError(
            f"deformation is not diffeomorphic at grid node ({where})", exc.step, exc.index
        ) from exc
    return GridFlow(grid, flow.points[-1], flow.jacobians[-1])


def log_jacobian_field(path, grid):
    """log det of the flow Jacobian at every grid node.

    For a reversed path the flow runs from ``t = 1`` to ``t = 0`` and the field
    is the log-Jacobian of the inverse deformation.
    """
    return log_jacobian_from_flow(flow_grid(path, grid))


def log_jacobian_from_flow(flow):
    return ScalarField(flow.grid, np.log(np.linalg.det(flow.jacobians)))


def cauchy_green_trace(jacobians, grid):
    """log(trace(J^T J)) per grid node."""
    J = np.asarray(jacobians, dtype=float)
    return ScalarField(grid, np.log(np.einsum("pij,pij->p", J, J)))


def atom_log_jacobians(path):
    """log det D(phi) of the deformation generated by ``path`` at its atoms.

    A forward path reports the value at ``phi(x_k)``; for a reversed path the
    endpoint holds ``D phi^{-1}(x_k)`` and the sign is flipped, so both refer
    to the deformation that maps the moving frame onto the fixed one.
    """
    logdet = np.log(np.linalg.det(path.endpoint.J))
    return logdet if path.direction == FORWARD else -logdet


def divergence_at_atoms(config):
    """trace(Dv(x_k)) of the velocity generated by ``config`` at each atom."""
    return np.trace(velocity_jacobian(config, config.positions), axis1=1, axis2=2)
