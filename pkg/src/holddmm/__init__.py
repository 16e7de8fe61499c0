"""Geodesic shooting registration with zeroth- and first-order momentum atoms."""

from .adjoint import (
    CoState,
    MomentumGradient,
    backward_transport,
    forward_variation,
    linearized_rhs,
    objective_gradient,
    transposed_rhs,
)
from .epdiff import GeodesicPath, ShootState, flow_passive, init_state, rhs, shoot
from .errors import InputError, IntegrationError
from .kernel import KernelSpec
from .momenta import (
    Atom,
    MomentumConfig,
    energy,
    energy_gradient,
    make_linear_atom,
    make_translation_atom,
    velocity,
    velocity_jacobian,
)
from .registration import (
    IMAGE_REVERSED,
    POINTS_FORWARD,
    OptimizerOptions,
    RegistrationProblem,
    RegistrationResult,
    register,
)
from .similarity import (
    ImageGrid,
    PointTargets,
    SamplingStencil,
    build_stencil,
    image_similarity,
    image_similarity_costate,
    point_similarity,
    point_similarity_costate,
    random_stencil,
)

__version__ = "0.1.0"
