import numpy as np
import pytest

from conftest import random_config, relative_error
from holddmm.epdiff import (
    REVERSED,
    ShootState,
    flow_passive,
    flow_prescribed,
    init_state,
    integrate_state,
    rhs,
    shoot,
)
from holddmm.errors import InputError, IntegrationError
from holddmm.kernel import KernelSpec
from holddmm.momenta import (
    MomentumConfig,
    energy,
    make_linear_atom,
    make_translation_atom,
)

ROT = np.array([[0.0, -1.0], [1.0, 0.0]])


def one(atom, sigma=2.0):
    return MomentumConfig(KernelSpec(sigma), (atom,))


def test_init_state():
    cfg = one(make_translation_atom([0.5, -1.0], [1.0, 0.0]))
    s = init_state(cfg)
    assert s.t == 0.0
    np.testing.assert_array_equal(s.x, [[0.5, -1.0]])
    np.testing.assert_array_equal(s.J, [np.eye(2)])
    np.testing.assert_array_equal(s.mu, [[1.0, 0.0]])
    np.testing.assert_array_equal(s.W, np.zeros((1, 2, 2)))


def test_init_state_constraint_exact(rng):
    cfg = random_config(rng, 3)
    s = init_state(cfg)
    np.testing.assert_array_equal(np.swapaxes(s.J, 1, 2) @ s.W, cfg.Z)
    np.testing.assert_array_equal(s.J, np.tile(np.eye(2), (3, 1, 1)))


def test_rhs_zeroth_atom():
    cfg = one(make_translation_atom([0.0, 0.0], [1.0, -0.5]))
    d = rhs(init_state(cfg), cfg)
    np.testing.assert_array_equal(d.x, [[1.0, -0.5]])
    np.testing.assert_array_equal(d.J, np.zeros((1, 2, 2)))
    np.testing.assert_array_equal(d.mu, np.zeros((1, 2)))
    np.testing.assert_array_equal(d.W, np.zeros((1, 2, 2)))


def test_rhs_first_order_atom():
    cfg = one(make_linear_atom([0.0, 0.0], np.eye(2)))
    d = rhs(init_state(cfg), cfg)
    np.testing.assert_array_equal(d.x, np.zeros((1, 2)))
    np.testing.assert_allclose(d.J[0], 0.5 * np.eye(2), atol=1e-15)
    np.testing.assert_array_equal(d.mu, np.zeros((1, 2)))
    np.testing.assert_allclose(d.W[0], -0.5 * np.eye(2), atol=1e-15)


def test_rhs_matches_reference_trajectory(rng):
    # derivative at t = 0 from a fine RK4 reference run in both time directions
    for _ in range(5):
        cfg = random_config(rng, 2)
        y0 = init_state(cfg).as_vector()
        tau = 1e-4
        plus, _ = integrate_state(cfg, y0, 10, tau / 10)
        minus, _ = integrate_state(cfg, y0, 10, -tau / 10)
        fd = (plus[-1] - minus[-1]) / (2 * tau)
        assert relative_error(rhs(init_state(cfg), cfg).as_vector(), fd) < 1e-5


def test_rhs_rejects_singular_jacobian():
    cfg = one(make_linear_atom([0.0, 0.0], np.eye(2)))
    s = init_state(cfg)
    bad = ShootState(0.0, s.x, np.array([[[1.0, 0.0], [0.0, -1.0]]]), s.mu, s.W)
    with pytest.raises(IntegrationError):
        rhs(bad, cfg)
    nan = ShootState(0.0, np.array([[np.nan, 0.0]]), s.J, s.mu, s.W)
    with pytest.raises(IntegrationError):
        rhs(nan, cfg)
    with pytest.raises(InputError):
        rhs(init_state(random_config(np.random.default_rng(0), 2)), cfg)


def test_straight_line_geodesic():
    z = np.array([1.25, -0.75])
    cfg = one(make_translation_atom([0.5, 2.0], z), sigma=1.3)
    path = shoot(cfg, 17)
    np.testing.assert_allclose(path.endpoint.x[0], [0.5, 2.0] + z, atol=1e-12)
    # constant speed: every node lies on the straight line
    t = path.times[:, None]
    xs = np.array([s.x[0] for s in path.states])
    np.testing.assert_allclose(xs, [0.5, 2.0] + t * z, atol=1e-12)


def test_shoot_arguments():
    cfg = one(make_translation_atom([0.0, 0.0], [1.0, 0.0]))
    with pytest.raises(InputError):
        shoot(cfg, 0)
    with pytest.raises(InputError):
        shoot(cfg, 10, "sideways")
    path = shoot(cfg, 4)
    assert path.steps == 4 and path.states[0].t == 0.0 and path.endpoint.t == 1.0
    np.testing.assert_array_equal(path.state(0).as_vector(), init_state(cfg).as_vector())


def test_reversed_shoot_times():
    cfg = one(make_translation_atom([0.0, 0.0], [1.0, 0.0]))
    path = shoot(cfg, 5, REVERSED)
    assert path.times[0] == 1.0 and path.times[-1] == 0.0
    np.testing.assert_allclose(path.endpoint.x[0], [-1.0, 0.0], atol=1e-14)


def test_conservation_and_constraint(rng):
    for _ in range(10):
        cfg = random_config(rng, int(rng.integers(1, 4)), sigma=rng.uniform(1.0, 3.0))
        path = shoot(cfg, 100)
        e = path.energies()
        assert e[0] == pytest.approx(energy(cfg), rel=1e-14)
        assert np.max(np.abs(e - e[0])) / e[0] <= 1e-6
        assert path.constraint_drift() <= 1e-6


def test_order_of_convergence():
    cfg = MomentumConfig.from_arrays(
        KernelSpec(1.5), [[-0.5, 0.0], [0.6, 0.3]], [[0.8, 0.2], [-0.3, 0.5]],
        [[[0.4, -0.6], [0.5, 0.1]], [[-0.3, 0.2], [0.1, 0.6]]],
    )
    ref = shoot(cfg, 400).endpoint.as_vector()
    err = [np.linalg.norm(shoot(cfg, n).endpoint.as_vector() - ref) for n in (10, 20, 40)]
    orders = np.log2(np.array(err[:-1]) / np.array(err[1:]))
    assert np.all(orders >= 3.5)


def test_reversibility(rng):
    cfg = random_config(rng, 3, sigma=2.0)
    path = shoot(cfg, 60)
    back, _ = integrate_state(cfg, path.endpoint.as_vector(), 60, -1.0 / 60)
    assert np.max(np.abs(back[-1] - path.vectors[0])) < 1e-8


def test_two_rotations_stay_diffeomorphic():
    cfg = MomentumConfig.from_arrays(
        KernelSpec(1.0), [[-0.5, 0.0], [0.5, 0.0]], np.zeros((2, 2)), [3.0 * ROT, -3.0 * ROT]
    )
    path = shoot(cfg, 50)
    for s in path.states:
        assert np.all(np.linalg.det(s.J) > 0)


def test_integration_failure_reports_step():
    # a strong contraction folds the atom's Jacobian
    cfg = one(make_linear_atom([0.0, 0.0], -20.0 * np.eye(2)), sigma=1.0)
    with pytest.raises(IntegrationError) as info:
        shoot(cfg, 2)
    assert info.value.step is not None
    assert "step" in str(info.value)


def test_passive_point_follows_zeroth_atom():
    cfg = one(make_translation_atom([0.3, 0.1], [0.9, -0.4]), sigma=1.5)
    path = shoot(cfg, 20)
    flow = flow_passive(path, [[0.3, 0.1]])
    atoms = np.array([s.x for s in path.states])
    np.testing.assert_allclose(flow.points, atoms, atol=1e-14)
    assert flow.jacobians is None


def test_passive_far_point_is_still(rng):
    cfg = random_config(rng, 2, sigma=1.0)
    far = cfg.positions.mean(axis=0) + np.array([40.0, 0.0])
    flow = flow_passive(shoot(cfg, 20), [far])
    assert np.linalg.norm(flow.points[-1, 0] - far) < 1e-10


def test_passive_jacobians_match_grid_differences(rng):
    cfg = random_config(rng, 2, sigma=2.0)
    path = shoot(cfg, 30)
    h = 1e-3
    base = rng.normal(size=(6, 2))
    pts = [base]
    for e in np.eye(2):
        pts += [base + h * e, base - h * e]
    flow = flow_passive(path, np.concatenate(pts), with_jacobians=True)
    end = flow.points[-1].reshape(5, 6, 2)
    fd = np.stack([(end[1] - end[2]) / (2 * h), (end[3] - end[4]) / (2 * h)], axis=-1)
    J = flow.jacobians[-1][:6]
    assert relative_error(J, fd) < 1e-3


def test_flow_prescribed_translation():
    cfg = one(make_translation_atom([0.0, 0.0], [1.0, 0.0]), sigma=100.0)
    flow = flow_prescribed(lambda t: cfg, [[0.0, 0.0], [0.5, 0.5]], 10, with_jacobians=True)
    np.testing.assert_allclose(flow.points[0], [1.0, 0.0], rtol=1e-4)  # |x| / sigma tiny
    assert flow.jacobians.shape == (2, 2, 2)
