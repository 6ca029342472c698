import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.linalg import expm

from ctraj.errors import AngleAtBoundary
from ctraj.manifold import (SE3, SO3, Euclidean, KinematicState, ManifoldElement, SO3xR3, adjoint, exp,
                            group_from_tag, left_jacobian, left_jacobian_inv, log, right_jacobian, skew,
                            small_adjoint)

GROUPS = [SO3, SE3, SO3xR3, Euclidean(2), Euclidean(4)]
LIE_GROUPS = [SO3, SE3, SO3xR3]


def tangent(group, rot_max=3.0):
    """Tangent vectors whose rotation block has norm at most ``rot_max``."""
    vec = arrays(np.float64, group.dim, elements=st.floats(-2.0, 2.0, allow_nan=False))

    def clip(x):
        if group in (SO3, SE3, SO3xR3):
            sl = slice(0, 3) if group == SO3 else slice(3, 6)
            n = np.linalg.norm(x[sl])
            if n > rot_max:
                x = x.copy()
                x[sl] *= rot_max / n
        return x

    return vec.map(clip)


def hat(group, xi):
    """Lie-algebra matrix of ``xi`` in the storage convention of ``group``."""
    if group == SO3:
        return skew(xi)
    if group == SE3:
        M = np.zeros((4, 4))
        M[:3, :3] = skew(xi[3:])
        M[:3, 3] = xi[:3]
        return M
    raise TypeError


def series_exp(M, terms=30):
    out = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for n in range(1, terms):
        term = term @ M / n
        out = out + term
    return out


def test_so3_exp_zero_and_quarter_turn():
    np.testing.assert_allclose(SO3.exp(np.zeros(3)), np.eye(3), atol=0)
    R = SO3.exp(np.array([0.0, 0.0, np.pi / 2]))
    np.testing.assert_allclose(R @ [1.0, 0, 0], [0.0, 1.0, 0.0], atol=1e-15)


@pytest.mark.parametrize("group", [SO3, SE3])
def test_exp_matches_power_series(group, rng):
    for _ in range(20):
        xi = rng.normal(size=group.dim)
        np.testing.assert_allclose(group.exp(xi), series_exp(hat(group, xi)), atol=1e-12)


@pytest.mark.parametrize("group", GROUPS, ids=lambda g: g.tag)
def test_log_of_identity_is_zero(group):
    np.testing.assert_array_equal(group.log(group.identity()), np.zeros(group.dim))


def test_se3_pure_translation_log():
    T = np.eye(4)
    T[:3, 3] = [1.0, -2.0, 0.5]
    np.testing.assert_allclose(SE3.log(T), [1.0, -2.0, 0.5, 0, 0, 0], atol=1e-15)


@pytest.mark.parametrize("group", GROUPS, ids=lambda g: g.tag)
@given(data=st.data())
def test_exp_log_roundtrip(group, data):
    xi = data.draw(tangent(group))
    assert np.linalg.norm(group.log(group.exp(xi)) - xi) <= 1e-10


def test_roundtrip_batch_of_thousand(rng):
    for group in LIE_GROUPS:
        xi = rng.normal(size=(1000, group.dim))
        sl = slice(0, 3) if group == SO3 else slice(3, 6)
        n = np.linalg.norm(xi[:, sl], axis=1, keepdims=True)
        xi[:, sl] *= np.minimum(1.0, 3.0 / n)
        assert np.max(np.abs(group.log(group.exp(xi)) - xi)) <= 1e-10


@pytest.mark.parametrize("group", [SO3, SE3, SO3xR3])
def test_log_rejects_angle_at_pi(group):
    xi = np.zeros(group.dim)
    xi[0 if group == SO3 else 3] = np.pi
    with pytest.raises(AngleAtBoundary):
        group.log(group.exp(xi))


@pytest.mark.parametrize("group", GROUPS, ids=lambda g: g.tag)
def test_adjoint_homomorphism_and_identity(group, rng):
    np.testing.assert_allclose(group.adjoint(group.identity()), np.eye(group.dim), atol=0)
    for _ in range(20):
        a, b = group.random(rng), group.random(rng)
        np.testing.assert_allclose(group.adjoint(group.compose(a, b)),
                                   group.adjoint(a) @ group.adjoint(b), atol=1e-10)


@pytest.mark.parametrize("group", GROUPS, ids=lambda g: g.tag)
@given(data=st.data())
def test_adjoint_of_exp_is_exp_of_small_adjoint(group, data):
    xi = data.draw(tangent(group))
    np.testing.assert_allclose(group.adjoint(group.exp(xi)), series_exp(group.ad(xi), 40), atol=1e-10)


@pytest.mark.parametrize("group", GROUPS, ids=lambda g: g.tag)
def test_adjoint_conjugation(group, rng):
    g = group.random(rng)
    xi = 1e-4 * rng.normal(size=group.dim)
    h = group.exp(xi)
    lhs = group.log(group.compose(group.compose(g, h), group.inverse(g)))
    np.testing.assert_allclose(lhs, group.adjoint(g) @ xi, atol=1e-10)


def test_small_adjoint_so3_and_alternating(rng):
    np.testing.assert_array_equal(SO3.ad(np.array([1.0, 0, 0])), skew([1.0, 0, 0]))
    for group in GROUPS:
        xi = rng.normal(size=group.dim)
        np.testing.assert_allclose(group.ad(xi) @ xi, 0.0, atol=1e-14)


def test_se3_small_adjoint_is_derivative_of_adjoint(rng):
    xi = rng.normal(size=6)
    v, w = xi[:3], xi[3:]
    expected = np.block([[skew(w), skew(v)], [np.zeros((3, 3)), skew(w)]])
    np.testing.assert_array_equal(SE3.ad(xi), expected)
    h = 1e-6
    fd = (SE3.adjoint(SE3.exp(h * xi)) - SE3.adjoint(SE3.exp(-h * xi))) / (2 * h)
    np.testing.assert_allclose(fd, expected, atol=1e-8)


@pytest.mark.parametrize("group", GROUPS, ids=lambda g: g.tag)
@given(data=st.data())
def test_left_jacobian_identities(group, data):
    xi = data.draw(tangent(group, rot_max=3.0))
    Jl = group.left_jacobian(xi)
    np.testing.assert_allclose(Jl @ group.left_jacobian_inv(xi), np.eye(group.dim), atol=1e-10)
    np.testing.assert_allclose(group.right_jacobian(xi), group.left_jacobian(-xi), atol=1e-12)
    np.testing.assert_allclose(Jl, group.adjoint(group.exp(xi)) @ group.right_jacobian(xi), atol=1e-10)
    np.testing.assert_allclose(Jl @ xi, xi, atol=1e-10)


@pytest.mark.parametrize("group", GROUPS, ids=lambda g: g.tag)
def test_left_jacobian_zero_is_identity(group):
    np.testing.assert_allclose(group.left_jacobian(np.zeros(group.dim)), np.eye(group.dim), atol=0)


@pytest.mark.parametrize("group", LIE_GROUPS)
def test_left_jacobian_finite_difference(group, rng):
    for _ in range(10):
        xi = rng.normal(size=group.dim)
        delta = 1e-6 * rng.normal(size=group.dim)
        lhs = group.log(group.compose(group.exp(xi + delta), group.inverse(group.exp(xi))))
        np.testing.assert_allclose(lhs, group.left_jacobian(xi) @ delta, atol=1e-11)


def _rotation_axis(group, rng):
    """Unit tangent whose rotation block has unit norm."""
    xi = rng.normal(size=group.dim)
    sl = slice(0, 3) if group == SO3 else slice(3, 6)
    return xi / np.linalg.norm(xi[sl])


@pytest.mark.parametrize("group", LIE_GROUPS)
@pytest.mark.parametrize("switch", [1e-6, 0.5])
def test_jacobians_continuous_across_series_switch(group, switch, rng):
    axis = _rotation_axis(group, rng)
    below, above = switch * (1 - 1e-9) * axis, switch * (1 + 1e-9) * axis
    for fn in (group.left_jacobian, group.left_jacobian_inv):
        np.testing.assert_allclose(fn(below), fn(above), atol=1e-9)


@pytest.mark.parametrize("group", LIE_GROUPS)
@pytest.mark.parametrize("angle", [1e-5, 1e-7, 0.3, 0.49, 0.51, 2.0])
def test_left_jacobian_matches_adjoint_integral(group, angle, rng):
    """J_l(xi) equals the integral of Ad_{Exp(s xi)} over s in [0, 1]."""
    xi = angle * _rotation_axis(group, rng)
    s = np.linspace(0.0, 1.0, 2001)
    ads = np.stack([group.adjoint(group.exp(si * xi)) for si in s])
    w = np.full(s.size, 1.0)
    w[0] = w[-1] = 0.5
    integral = np.tensordot(w / (s.size - 1), ads, axes=1)
    np.testing.assert_allclose(group.left_jacobian(xi), integral, atol=1e-6)


def test_euclidean_group_is_addition(rng):
    R4 = Euclidean(4)
    a, b = rng.normal(size=4), rng.normal(size=4)
    np.testing.assert_array_equal(R4.exp(a), a)
    np.testing.assert_array_equal(R4.log(a), a)
    np.testing.assert_array_equal(R4.compose(a, b), a + b)
    np.testing.assert_array_equal(R4.inverse(a), -a)
    np.testing.assert_array_equal(R4.between(a, b), a - b)
    np.testing.assert_array_equal(R4.retract(a, b), a + b)
    np.testing.assert_array_equal(R4.left_jacobian(a), np.eye(4))
    np.testing.assert_array_equal(R4.adjoint(a), np.eye(4))
    np.testing.assert_array_equal(R4.ad(a), np.zeros((4, 4)))
    with pytest.raises(ValueError):
        Euclidean(0)


def test_product_group_is_rotation_times_translation(rng):
    xi = rng.normal(size=6)
    g = SO3xR3.exp(xi)
    np.testing.assert_allclose(g[:3, :3], expm(skew(xi[3:])), atol=1e-13)
    np.testing.assert_allclose(g[:3, 3], xi[:3], atol=0)
    h = SO3xR3.exp(rng.normal(size=6))
    gh = SO3xR3.compose(g, h)
    np.testing.assert_allclose(gh[:3, :3], g[:3, :3] @ h[:3, :3], atol=1e-14)
    np.testing.assert_allclose(gh[:3, 3], g[:3, 3] + h[:3, 3], atol=1e-14)


def test_manifold_element_reorthonormalises(rng):
    R = SO3.exp(rng.normal(size=3))
    noisy = R + 1e-7 * rng.normal(size=(3, 3))
    e = ManifoldElement(SO3, noisy)
    np.testing.assert_allclose(e.value.T @ e.value, np.eye(3), atol=1e-12)
    assert np.linalg.det(e.value) == pytest.approx(1.0, abs=1e-12)
    assert (e @ e.inverse()).log() == pytest.approx(np.zeros(3), abs=1e-12)


@pytest.mark.parametrize("tag,group", [("SO3", SO3), ("SE3", SE3), ("SO3xR3", SO3xR3), ("R3", Euclidean(3))])
def test_group_from_tag(tag, group):
    assert group_from_tag(tag) == group
    assert group.tag == tag


def test_functional_aliases(rng):
    xi = rng.normal(size=6)
    np.testing.assert_array_equal(exp(SE3, xi), SE3.exp(xi))
    np.testing.assert_array_equal(log(SE3, SE3.exp(xi)), SE3.log(SE3.exp(xi)))
    np.testing.assert_array_equal(adjoint(SE3, SE3.exp(xi)), SE3.adjoint(SE3.exp(xi)))
    np.testing.assert_array_equal(small_adjoint(SE3, xi), SE3.ad(xi))
    np.testing.assert_array_equal(left_jacobian(SE3, xi), SE3.left_jacobian(xi))
    np.testing.assert_array_equal(left_jacobian_inv(SE3, xi), SE3.left_jacobian_inv(xi))
    np.testing.assert_array_equal(right_jacobian(SE3, xi), SE3.left_jacobian(-xi))


def test_kinematic_state_vector():
    s = KinematicState(Euclidean(2), [1.0, 2.0], [3.0, 4.0], [5.0, 6.0])
    np.testing.assert_array_equal(s.as_vector(), [1, 2, 3, 4, 5, 6])
