import numpy as np
import pytest

from conftest import central_difference, random_config, relative_error
from holddmm.adjoint import (
    CoState,
    MomentumGradient,
    backward_transport,
    coefficient_vector,
    config_from_coefficients,
    evaluate_objective,
    forward_variation,
    initial_variation,
    linearized_rhs,
    objective_gradient,
    transposed_rhs,
)
from holddmm.epdiff import ShootState, init_state, rhs, shoot
from holddmm.errors import InputError
from holddmm.momenta import MomentumConfig, energy_gradient, energy_position_gradient
from holddmm.registration import POINTS_FORWARD, RegistrationProblem
from holddmm.similarity import PointTargets


def random_state(rng, cfg, t=0.3):
    """A generic state near the identity with non-trivial Jacobians."""
    n = cfg.n_atoms
    J = np.eye(2) + 0.2 * rng.normal(size=(n, 2, 2))
    return ShootState(t, cfg.positions + 0.1 * rng.normal(size=(n, 2)), J,
                      rng.normal(size=(n, 2)), rng.normal(size=(n, 2, 2)))


def random_delta(rng, cfg):
    n = cfg.n_atoms
    return ShootState(0.0, rng.normal(size=(n, 2)), rng.normal(size=(n, 2, 2)),
                      rng.normal(size=(n, 2)), rng.normal(size=(n, 2, 2)))


def point_problem(cfg, rng, lam=1.0, jacobians=True):
    n = cfg.n_atoms
    y = cfg.positions + rng.normal(scale=0.5, size=(n, 2))
    Y = np.eye(2) + 0.3 * rng.normal(size=(n, 2, 2)) if jacobians else None
    return RegistrationProblem(POINTS_FORWARD, cfg, lam, PointTargets(y, Y), steps=20)


def test_linearized_rhs_zero_and_homogeneous(rng):
    cfg = random_config(rng, 2)
    s = random_state(rng, cfg)
    zero = linearized_rhs(s, np.zeros_like(s.as_vector()), cfg)
    assert np.all(zero.as_vector() == 0.0)
    d = random_delta(rng, cfg)
    a = linearized_rhs(s, 2.0 * d.as_vector(), cfg).as_vector()
    np.testing.assert_array_equal(a, 2.0 * linearized_rhs(s, d, cfg).as_vector())
    alpha = rng.normal()
    np.testing.assert_allclose(
        linearized_rhs(s, alpha * d.as_vector(), cfg).as_vector(),
        alpha * linearized_rhs(s, d, cfg).as_vector(), rtol=1e-12, atol=1e-14,
    )


def test_linearized_rhs_matches_central_differences(rng):
    for _ in range(10):
        cfg = random_config(rng, 2)
        s = random_state(rng, cfg)
        d = random_delta(rng, cfg).as_vector()
        y = s.as_vector()
        h = 1e-6 * np.linalg.norm(y) / np.linalg.norm(d)
        plus = rhs(ShootState.from_vector(s.t, y + h * d, 2, 2), cfg).as_vector()
        minus = rhs(ShootState.from_vector(s.t, y - h * d, 2, 2), cfg).as_vector()
        fd = (plus - minus) / (2 * h)
        assert relative_error(linearized_rhs(s, d, cfg).as_vector(), fd) <= 1e-5


def test_transposed_rhs_is_the_transpose(rng):
    for _ in range(10):
        cfg = random_config(rng, 3)
        s = random_state(rng, cfg)
        d = random_delta(rng, cfg)
        a = CoState(*(rng.normal(size=v.shape) for v in (s.x, s.J, s.mu, s.W)))
        lhs = a.as_vector() @ linearized_rhs(s, d, cfg).as_vector()
        rhs_ = transposed_rhs(s, a, cfg).as_vector() @ d.as_vector()
        assert lhs == pytest.approx(rhs_, rel=1e-12)


def test_input_checks(rng):
    cfg = random_config(rng, 2)
    with pytest.raises(InputError):
        linearized_rhs(init_state(cfg), np.zeros(3), cfg)
    with pytest.raises(InputError):
        backward_transport("not a path", CoState.zeros(2, 2))
    with pytest.raises(InputError):
        backward_transport(shoot(cfg, 5), CoState.zeros(3, 2))


def test_zero_endpoint_gives_zero_gradient(rng):
    cfg = random_config(rng, 2)
    g = backward_transport(shoot(cfg, 10), CoState.zeros(2, 2))
    assert np.all(g.as_vector() == 0.0) and np.all(g.g_x == 0.0)


def test_adjoint_identity(rng):
    cfg = random_config(rng, 2)
    path = shoot(cfg, 30)
    for _ in range(20):
        w = CoState(*(rng.normal(size=v.shape) for v in (cfg.positions, init_state(cfg).J,
                                                         cfg.z, cfg.Z)))
        dz, dZ, dx = rng.normal(size=(2, 2)), rng.normal(size=(2, 2, 2)), rng.normal(size=(2, 2))
        g = backward_transport(path, w)
        lhs = np.sum(g.g_z * dz) + np.sum(g.g_Z * dZ) + np.sum(g.g_x * dx)
        var = forward_variation(path, initial_variation(cfg, dz, dZ, dx))
        rhs_ = w.as_vector() @ var.as_vector()
        assert lhs == pytest.approx(rhs_, rel=1e-6)


def test_transport_is_linear_in_endpoint(rng):
    cfg = random_config(rng, 2)
    path = shoot(cfg, 10)
    w = CoState(*(rng.normal(size=v.shape) for v in (cfg.positions, init_state(cfg).J, cfg.z, cfg.Z)))
    a = backward_transport(path, w.scaled(2.0)).as_vector()
    np.testing.assert_array_equal(a, 2.0 * backward_transport(path, w).as_vector())


def test_lambda_zero_gives_energy_gradient(rng):
    cfg = random_config(rng, 3)
    f, g = objective_gradient(cfg, point_problem(cfg, rng, lam=0.0))
    gz, gZ = energy_gradient(cfg)
    np.testing.assert_array_equal(g.g_z, gz)
    np.testing.assert_array_equal(g.g_Z, gZ)


def test_optimum_has_zero_gradient(rng):
    cfg = random_config(rng, 2)
    zero = cfg.with_coefficients(np.zeros_like(cfg.z), np.zeros_like(cfg.Z))
    problem = RegistrationProblem(
        POINTS_FORWARD, zero, 1.0, PointTargets(zero.positions, np.tile(np.eye(2), (2, 1, 1)))
    )
    f, g = objective_gradient(zero, problem)
    assert f == 0.0
    assert np.all(g.as_vector() == 0.0)


def _objective(cfg, problem):
    return lambda c: evaluate_objective(config_from_coefficients(cfg, c), problem).objective


def test_objective_gradient_matches_finite_differences(rng):
    for _ in range(5):
        cfg = random_config(rng, 2, scale=0.5)
        problem = point_problem(cfg, rng)
        f, g = objective_gradient(cfg, problem)
        fd = central_difference(_objective(cfg, problem), coefficient_vector(cfg), h=1e-6)
        assert relative_error(g.as_vector(), fd) <= 1e-4


def test_position_gradient_matches_finite_differences(rng):
    cfg = random_config(rng, 2, scale=0.5)
    problem = point_problem(cfg, rng)
    _, g = objective_gradient(cfg, problem)

    def f(x):
        moved = MomentumConfig.from_arrays(cfg.kernel, x.reshape(2, 2), cfg.z, cfg.Z)
        return evaluate_objective(moved, problem).objective

    fd = central_difference(f, cfg.positions.ravel())
    assert relative_error(g.g_x.ravel(), fd) <= 1e-4
    # the energy part alone
    assert g.g_x.shape == energy_position_gradient(cfg).shape


def test_reversed_gradient_matches_finite_differences(rng):
    cfg = random_config(rng, 2, scale=0.5)
    base = point_problem(cfg, rng)

    class Reversed:
        lam, steps, direction = 1.0, 20, "reversed"
        similarity = staticmethod(base.similarity)
        costate = staticmethod(base.costate)

    _, g = objective_gradient(cfg, Reversed)
    fd = central_difference(_objective(cfg, Reversed), coefficient_vector(cfg))
    assert relative_error(g.as_vector(), fd) <= 1e-4


def test_small_step_descent_is_monotone(rng):
    cfg = random_config(rng, 2, scale=0.5)
    problem = point_problem(cfg, rng)
    c = coefficient_vector(cfg)
    values = []
    for _ in range(50):
        f, g = objective_gradient(config_from_coefficients(cfg, c), problem)
        values.append(f)
        c = c - 1e-3 * g.as_vector()
    assert np.all(np.diff(values) <= 0)


def test_momentum_gradient_arithmetic():
    a = MomentumGradient(np.ones((1, 2)), np.ones((1, 2, 2)), np.ones((1, 2)))
    b = a + a.scaled(2.0)
    np.testing.assert_array_equal(b.as_vector(), 3.0 * np.ones(6))
    np.testing.assert_array_equal(b.g_x, [[3.0, 3.0]])
    assert (a + MomentumGradient(a.g_z, a.g_Z)).g_x is None
