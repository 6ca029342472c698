import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad_vec

from ctraj.errors import DegenerateInterval
from ctraj.manifold import SE3, SO3, Euclidean, KinematicState, SO3xR3
from ctraj.motion_model import (LinearSystem, ModelOrder, lie_prior_jacobians, lie_prior_residual,
                                linear_prior_residual, process_covariance, process_information_sqrt,
                                transition_matrix, whitening_from_covariance)

from conftest import central_diff, rel_err

ORDERS = [ModelOrder.WNOA, ModelOrder.WNOJ]


def _spd(rng, d):
    A = rng.normal(size=(d, d))
    return A @ A.T + d * np.eye(d)


def _quadrature_cov(dt, order, Q):
    d = Q.shape[0]
    m = order.blocks
    L = np.zeros((m * d, d))
    L[-d:] = np.eye(d)

    def integrand(s):
        Phi = transition_matrix(dt - s, order, d)
        return Phi @ L @ Q @ L.T @ Phi.T

    return quad_vec(integrand, 0.0, dt, epsabs=1e-14, epsrel=1e-13)[0]


def test_wnoj_transition_unit_step():
    np.testing.assert_array_equal(transition_matrix(1.0, ModelOrder.WNOJ, 1),
                                  [[1, 1, 0.5], [0, 1, 1], [0, 0, 1]])


@pytest.mark.parametrize("order", ORDERS)
@pytest.mark.parametrize("d", [1, 2, 3])
def test_transition_identity_and_semigroup(order, d):
    np.testing.assert_array_equal(transition_matrix(0.0, order, d), np.eye(order.blocks * d))
    np.testing.assert_allclose(transition_matrix(0.7, order, d) @ transition_matrix(0.3, order, d),
                               transition_matrix(1.0, order, d), atol=1e-12)


def test_transition_rejects_negative_dt():
    with pytest.raises(DegenerateInterval):
        transition_matrix(-0.1, ModelOrder.WNOJ, 1)


def test_wnoj_covariance_unit_step():
    expected = [[1 / 20, 1 / 8, 1 / 6], [1 / 8, 1 / 3, 1 / 2], [1 / 6, 1 / 2, 1]]
    np.testing.assert_allclose(process_covariance(1.0, ModelOrder.WNOJ, 1.0), expected, atol=1e-15)


@pytest.mark.parametrize("dt", [0.0, -1.0])
def test_covariance_rejects_non_positive_dt(dt):
    with pytest.raises(DegenerateInterval):
        process_covariance(dt, ModelOrder.WNOJ, 1.0)


def test_covariance_vanishes_as_dt_shrinks():
    assert np.max(np.abs(process_covariance(1e-9, ModelOrder.WNOJ, np.eye(2)))) < 1e-8


def test_covariance_matches_quadrature_fixed_case():
    Q = np.eye(2)
    np.testing.assert_allclose(process_covariance(0.37, ModelOrder.WNOJ, Q),
                               _quadrature_cov(0.37, ModelOrder.WNOJ, Q), atol=1e-9)


def test_covariance_matches_quadrature_random(rng):
    for _ in range(100):
        order = ORDERS[rng.integers(2)]
        d = int(rng.integers(1, 4))
        dt = float(rng.uniform(0.01, 2.0))
        Q = _spd(rng, d)
        Qdt = process_covariance(dt, order, Q)
        np.testing.assert_allclose(Qdt, _quadrature_cov(dt, order, Q), atol=1e-9, rtol=1e-9)
        np.testing.assert_allclose(Qdt, Qdt.T, atol=1e-12)
        assert np.all(np.linalg.eigvalsh(Qdt) > 0)


@given(dt=st.floats(1e-3, 10.0), q=st.floats(1e-3, 1e3))
def test_information_sqrt_whitens(dt, q):
    Qdt = process_covariance(dt, ModelOrder.WNOJ, q)
    L = process_information_sqrt(dt, ModelOrder.WNOJ, q)
    np.testing.assert_allclose(L @ Qdt @ L.T, np.eye(3), atol=1e-8)


def test_whitening_from_covariance(rng):
    cov = _spd(rng, 4)
    L = whitening_from_covariance(cov)
    np.testing.assert_allclose(L.T @ L, np.linalg.inv(cov), atol=1e-12)


@pytest.mark.parametrize("order", ORDERS)
def test_linear_system_from_order_matches_closed_form(order, rng):
    Q = _spd(rng, 2)
    sys = LinearSystem.from_order(order, Q)
    np.testing.assert_allclose(sys.transition(0.4), transition_matrix(0.4, order, 2), atol=1e-12)
    np.testing.assert_allclose(sys.covariance(0.4), process_covariance(0.4, order, Q), atol=1e-12)


def test_linear_prior_residual_examples(rng):
    sys = LinearSystem.from_order(ModelOrder.WNOJ, 1.0)
    np.testing.assert_allclose(linear_prior_residual([1, 2, 3], [4.5, 5, 3], 1.0, sys), 0.0, atol=0)
    np.testing.assert_array_equal(linear_prior_residual(np.zeros(3), np.zeros(3), 0.3, sys), 0.0)
    x = rng.normal(size=3)
    np.testing.assert_allclose(linear_prior_residual(x, transition_matrix(0.6, ModelOrder.WNOJ, 1) @ x, 0.6, sys),
                               0.0, atol=1e-14)


def test_linear_prior_residual_with_input():
    """A constant jerk input shifts the prior mean by the forced response."""
    u = lambda t: np.array([2.0])
    sys = LinearSystem.from_order(ModelOrder.WNOJ, 1.0, u=u)
    dt = 0.5
    x0 = np.array([0.1, -0.2, 0.3])
    x1 = transition_matrix(dt, ModelOrder.WNOJ, 1) @ x0 + 2.0 * np.array([dt ** 3 / 6, dt ** 2 / 2, dt])
    np.testing.assert_allclose(linear_prior_residual(x0, x1, dt, sys), 0.0, atol=1e-12)


GROUPS = [SO3, SE3, SO3xR3, Euclidean(3)]


def _geodesic(group, rng, dt):
    g0 = group.random(rng)
    v = rng.normal(size=group.dim)
    v *= min(1.0, 3.0 / (dt * np.linalg.norm(v)))  # keep the step inside the log branch
    g1 = group.compose(group.exp(dt * v), g0)
    return (KinematicState(group, g0, v, np.zeros(group.dim)),
            KinematicState(group, g1, v, np.zeros(group.dim)))


@pytest.mark.parametrize("group", GROUPS, ids=lambda g: g.tag)
def test_lie_prior_zero_on_geodesics(group, rng):
    for _ in range(1000 // len(GROUPS)):
        dt = float(rng.uniform(0.01, 1.0))
        a, b = _geodesic(group, rng, dt)
        assert np.max(np.abs(lie_prior_residual(a, b, dt))) <= 1e-9


@pytest.mark.parametrize("group", GROUPS, ids=lambda g: g.tag)
def test_lie_prior_zero_for_identical_resting_states(group, rng):
    g = group.random(rng)
    s = KinematicState(group, g, np.zeros(group.dim), np.zeros(group.dim))
    np.testing.assert_allclose(lie_prior_residual(s, s, 0.5), 0.0, atol=1e-14)


@pytest.mark.parametrize("order", ORDERS)
def test_lie_prior_on_euclidean_equals_linear(order, rng):
    d = 3
    R3 = Euclidean(d)
    sys = LinearSystem.from_order(order, np.eye(d))
    m = order.blocks
    for _ in range(20):
        x0, x1 = rng.normal(size=m * d), rng.normal(size=m * d)
        dt = float(rng.uniform(0.05, 2.0))
        s0 = KinematicState(R3, x0[:d], x0[d:2 * d], x0[2 * d:] if m == 3 else None)
        s1 = KinematicState(R3, x1[:d], x1[d:2 * d], x1[2 * d:] if m == 3 else None)
        np.testing.assert_allclose(lie_prior_residual(s0, s1, dt), linear_prior_residual(x0, x1, dt, sys),
                                   atol=1e-14)


def _perturbed_residual(group, s0, s1, dt, key, delta):
    s0 = KinematicState(group, s0.g, s0.vel, s0.acc)
    s1 = KinematicState(group, s1.g, s1.vel, s1.acc)
    name, side = key.rsplit("_", 1)
    s = s0 if side == "j" else s1
    if name == "g":
        s.g = group.retract(s.g, delta)
    elif name == "vel":
        s.vel = s.vel + delta
    else:
        s.acc = s.acc + delta
    return lie_prior_residual(s0, s1, dt)


@pytest.mark.parametrize("group", [SO3, SE3, SO3xR3], ids=lambda g: g.tag)
def test_lie_prior_jacobians_finite_difference(group, rng):
    worst = 0.0
    for _ in range(25):
        dt = float(rng.uniform(0.05, 1.0))
        g0 = group.random(rng)
        v0, a0 = 0.05 * rng.uniform(-1, 1, group.dim), 0.05 * rng.uniform(-1, 1, group.dim)
        g1 = group.compose(group.exp(dt * v0 + 0.01 * rng.normal(size=group.dim)), g0)
        v1, a1 = v0 + 0.01 * rng.normal(size=group.dim), a0 + 0.01 * rng.normal(size=group.dim)
        s0 = KinematicState(group, g0, v0, a0)
        s1 = KinematicState(group, g1, v1, a1)
        jac = lie_prior_jacobians(s0, s1, dt)
        for key, J in jac.items():
            fd = central_diff(lambda x: _perturbed_residual(group, s0, s1, dt, key, x), np.zeros(group.dim))
            worst = max(worst, rel_err(J, fd))
    assert worst <= 1e-3


def test_lie_prior_jacobian_constant_blocks(rng):
    group = SE3
    dt = 0.3
    a, b = _geodesic(group, rng, dt)
    jac = lie_prior_jacobians(a, b, dt)
    I, Z = np.eye(6), np.zeros((6, 6))
    np.testing.assert_allclose(jac["vel_j"], np.vstack([-dt * I, -I, Z]), atol=1e-14)
    np.testing.assert_allclose(jac["acc_j"], np.vstack([-0.5 * dt ** 2 * I, -dt * I, -I]), atol=1e-14)


def test_lie_prior_acc_jacobian_at_zero_displacement():
    s = KinematicState(SE3, np.eye(4), np.zeros(6), np.zeros(6))
    jac = lie_prior_jacobians(s, s, 0.5)
    np.testing.assert_allclose(jac["acc_j1"], np.vstack([np.zeros((12, 6)), np.eye(6)]), atol=1e-15)


def test_lie_prior_euclidean_jacobians_are_transition_blocks(rng):
    R2 = Euclidean(2)
    dt = 0.4
    s0 = KinematicState(R2, rng.normal(size=2), rng.normal(size=2), rng.normal(size=2))
    s1 = KinematicState(R2, rng.normal(size=2), rng.normal(size=2), rng.normal(size=2))
    jac = lie_prior_jacobians(s0, s1, dt)
    Phi = transition_matrix(dt, ModelOrder.WNOJ, 2)
    np.testing.assert_allclose(np.hstack([jac["g_j"], jac["vel_j"], jac["acc_j"]]), -Phi, atol=1e-15)
    np.testing.assert_allclose(np.hstack([jac["g_j1"], jac["vel_j1"], jac["acc_j1"]]), np.eye(6), atol=1e-15)
