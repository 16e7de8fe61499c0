"""Shooting registration over the momentum coefficients of fixed atoms.

The objective ``energy(rho) + lam * U(endpoint(rho))`` is minimised by
steepest descent with Armijo backtracking.  Atom positions never move.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .adjoint import (
    coefficient_vector,
    config_from_coefficients,
    evaluate_objective,
    objective_gradient,
)
from .epdiff import DEFAULT_STEPS, FORWARD, REVERSED, GeodesicPath
from .errors import InputError, IntegrationError
from .momenta import MomentumConfig
from .similarity import (
    ImageGrid,
    PointTargets,
    SamplingStencil,
    image_similarity,
    image_similarity_costate,
    point_similarity,
    point_similarity_costate,
)

log = logging.getLogger(__name__)

POINTS_FORWARD = "points-forward"
IMAGE_REVERSED = "image-reversed"
DEFAULT_IMAGE_LAMBDA = 16.0


@dataclass(frozen=True)
class OptimizerOptions:
    max_iters: int = 200
    initial_step: float = 1.0  # length of the first trial step in coefficient space
    armijo: float = 1e-4
    max_halvings: int = 20
    grow: float = 2.0
    gtol: float = 1e-6
    ftol: float = 1e-8  # relative objective decrease
    precondition: bool = False

    def __post_init__(self):
        if self.max_iters < 1:
            raise InputError("max_iters must be at least 1")
        if self.initial_step <= 0 or not (0 < self.armijo < 1):
            raise InputError("initial_step must be positive and armijo in (0, 1)")


@dataclass(frozen=True)
class RegistrationProblem:
    mode: str
    initial: MomentumConfig
    lam: float = 1.0
    targets: Optional[PointTargets] = None
    moving: Optional[ImageGrid] = None
    fixed: Optional[ImageGrid] = None
    stencil: Optional[SamplingStencil] = None
    F: str = "squared"
    optimizer: OptimizerOptions = field(default_factory=OptimizerOptions)
    steps: int = DEFAULT_STEPS

    def __post_init__(self):
        if self.lam < 0:
            raise InputError("lambda must be non-negative")
        if self.steps < 1:
            raise InputError("steps must be positive")
        if self.mode == POINTS_FORWARD:
            if self.targets is None:
                raise InputError("point registration needs targets")
            if self.targets.y.shape != self.initial.positions.shape:
                raise InputError("number of targets must equal number of atoms")
        elif self.mode == IMAGE_REVERSED:
            if self.moving is None or self.fixed is None or self.stencil is None:
                raise InputError("image registration needs moving, fixed and a stencil")
            if self.initial.dim != 2:
                raise InputError("image registration is two-dimensional")
            w, h = self.fixed.extent
            x = self.initial.positions
            if np.any(x < 0) or np.any(x[:, 0] > w) or np.any(x[:, 1] > h):
                raise InputError("control points must lie inside the fixed image")
        else:
            raise InputError(f"unknown registration mode {self.mode!r}")

    @property
    def direction(self):
        return FORWARD if self.mode == POINTS_FORWARD else REVERSED

    def similarity(self, state):
        if self.mode == POINTS_FORWARD:
            return point_similarity(state, self.targets)
        return image_similarity(
            state, self.moving, self.fixed, self.initial.positions, self.stencil, self.F
        )

    def costate(self, state):
        if self.mode == POINTS_FORWARD:
            return point_similarity_costate(state, self.targets)
        return image_similarity_costate(
            state, self.moving, self.fixed, self.initial.positions, self.stencil, self.F
        )


@dataclass(frozen=True)
class RegistrationResult:
    config: MomentumConfig
    history: np.ndarray
    similarity: float
    energy: float
    converged: bool
    iterations: int
    path: GeodesicPath
    initial_similarity: float
    message: str = ""

    @property
    def objective(self):
        return float(self.history[-1])

    @property
    def failed(self):
        """True when not a single step could be accepted from a non-stationary start."""
        return self.iterations == 0 and not self.converged


def _preconditioner(config, enabled):
    n, d = config.n_atoms, config.dim
    p = np.ones(n * d + n * d * d)
    if enabled:
        # inverse of the kernel's coincidence value for the first-order block
        p[n * d :] = 0.5 * config.kernel.sigma**2
    return p


def register(problem):
    """Minimise the registration objective starting from ``problem.initial``."""
    opts = problem.optimizer
    config = problem.initial
    precond = _preconditioner(config, opts.precondition)
    ev = evaluate_objective(config, problem)
    u0 = ev.similarity
    f, grad = objective_gradient(config, problem, ev)
    c = coefficient_vector(config)
    history = [f]
    step = None
    converged = False
    message = "maximum iterations reached"
    iterations = 0
    for _ in range(opts.max_iters):
        g = grad.as_vector()
        gnorm = float(np.linalg.norm(g))
        if gnorm <= opts.gtol:
            converged, message = True, "gradient norm below tolerance"
            break
        direction = -precond * g
        slope = float(g @ direction)
        if step is None:
            step = opts.initial_step / float(np.linalg.norm(direction))
        trial_ev = None
        for _ in range(opts.max_halvings + 1):
            trial = config_from_coefficients(config, c + step * direction)
            try:
                cand = evaluate_objective(trial, problem)
            except IntegrationError as exc:
                log.debug("step %g rejected: %s", step, exc)
                step *= 0.5
                continue
            if cand.objective <= f + opts.armijo * step * slope:
                trial_ev = cand
                break
            step *= 0.5
        if trial_ev is None:
            message = "line search failed"
            break
        decrease = f - trial_ev.objective
        c = c + step * direction
        config, ev = trial, trial_ev
        f, grad = objective_gradient(config, problem, ev)
        history.append(f)
        iterations += 1
        log.debug("iter %d objective %.10g similarity %.6g", iterations, f, ev.similarity)
        if decrease <= opts.ftol * abs(history[-2]):
            converged, message = True, "objective decrease below tolerance"
            break
        step *= opts.grow
    return RegistrationResult(
        config=config,
        history=np.array(history),
        similarity=ev.similarity,
        energy=ev.energy,
        converged=converged,
        iterations=iterations,
        path=ev.path,
        initial_similarity=u0,
        message=message,
    )
