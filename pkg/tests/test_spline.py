import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.interpolate import BSpline

from ctraj.errors import AngleAtBoundary, OutOfDomain, UnsupportedOrder
from ctraj.manifold import SE3, SO3, Euclidean, SO3xR3
from ctraj.spline import (MAX_ORDER, SplineTrajectory, blending_matrix, cumulative_basis, eval_lie, eval_vector,
                          lie_jacobians)

from conftest import central_diff, rel_err

LIE = [SO3, SE3, SO3xR3]


def _random_spline(group, rng, k, n_ctrl=None, period=0.5, step=0.4, start=0.0):
    """Random walk of control points so consecutive increments stay well inside the log branch."""
    n_ctrl = n_ctrl or k + 3
    ctrl = [group.random(rng)]
    for _ in range(n_ctrl - 1):
        ctrl.append(group.retract(ctrl[-1], step * rng.uniform(-1, 1, group.dim)))
    return SplineTrajectory(group, k, start, period, np.stack(ctrl))


def _scipy_sum_form(traj, t, deriv=0):
    """Independent sum-form evaluation ``sum_i B_i(t) p_i`` on the same knot vector."""
    knots = traj.knot(np.arange(1, traj.num_blocks + traj.k + 1))
    return BSpline(knots, traj.ctrl, traj.k - 1, extrapolate=False)(t, nu=deriv)


# ---------------------------------------------------------------------------
# blending matrices
# ---------------------------------------------------------------------------

def test_order_two_is_linear_interpolation():
    np.testing.assert_array_equal(blending_matrix(2), [[1, 0], [0, 1]])
    u = np.linspace(0, 1, 7)
    np.testing.assert_allclose(cumulative_basis(u, 2), np.stack([np.ones_like(u), u], axis=1), atol=0)


def test_order_four_matrix():
    expected = np.array([[6, 0, 0, 0], [5, 3, -3, 1], [1, 3, 3, -2], [0, 0, 0, 1]]) / 6.0
    np.testing.assert_allclose(blending_matrix(4), expected, atol=1e-15)


@pytest.mark.parametrize("k", range(2, MAX_ORDER + 1))
def test_first_cumulative_basis_is_one(k):
    u = np.linspace(0, 1, 11)
    np.testing.assert_allclose(cumulative_basis(u, k)[:, 0], 1.0, atol=1e-13)


@pytest.mark.parametrize("k", range(2, MAX_ORDER + 1))
def test_cumulative_basis_boundary_values(k):
    """The end of one segment weights each control point like the start of the next."""
    b0, b1 = cumulative_basis([0.0, 1.0], k)
    assert b0[-1] == pytest.approx(0.0, abs=1e-13)
    np.testing.assert_allclose(b1[1:], b0[:-1], atol=1e-12)
    assert np.all(np.diff(b0) <= 1e-13) and np.all(np.diff(b1) <= 1e-13)


@pytest.mark.parametrize("k", [0, 1, MAX_ORDER + 1])
def test_unsupported_order(k):
    with pytest.raises(UnsupportedOrder):
        blending_matrix(k)
    with pytest.raises(UnsupportedOrder):
        SplineTrajectory(Euclidean(1), k, 0.0, 1.0, np.zeros((max(k, 2), 1)))


def test_blending_matrix_is_read_only():
    with pytest.raises(ValueError):
        blending_matrix(4)[0, 0] = 2.0


# ---------------------------------------------------------------------------
# vector evaluation
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("k", [2, 3, 4, 5, 6])
def test_cumulative_form_matches_sum_form(k, rng):
    for _ in range(100 if k == 4 else 20):
        traj = SplineTrajectory(Euclidean(3), k, rng.uniform(-1, 1), rng.uniform(0.05, 1.0),
                                rng.normal(size=(k + 4, 3)))
        t = rng.uniform(*traj.domain, size=25)
        for deriv in (0, 1, 2):
            expected = _scipy_sum_form(traj, t, deriv)
            scale = max(1.0, np.max(np.abs(expected)))
            np.testing.assert_allclose(eval_vector(t, traj, deriv), expected, atol=1e-12 * scale)


def test_constant_control_points():
    p = np.array([1.0, -2.0, 0.5])
    traj = SplineTrajectory(Euclidean(3), 4, 0.0, 0.1, np.tile(p, (7, 1)))
    t = np.linspace(*traj.domain, 13)
    np.testing.assert_allclose(eval_vector(t, traj), np.tile(p, (13, 1)), atol=1e-14)
    np.testing.assert_allclose(eval_vector(t, traj, 1), 0.0, atol=1e-12)
    np.testing.assert_allclose(eval_vector(t, traj, 2), 0.0, atol=1e-10)


def test_order_two_ramp():
    dt = 0.25
    traj = SplineTrajectory(Euclidean(1), 2, 0.0, dt, np.array([[0.0], [1.0]]))
    t = np.linspace(*traj.domain, 9)
    np.testing.assert_allclose(eval_vector(t, traj)[:, 0], (t - traj.domain[0]) / dt, atol=1e-14)
    np.testing.assert_allclose(eval_vector(t, traj, 1)[:, 0], 1.0 / dt, atol=1e-12)


@pytest.mark.parametrize("k", [3, 4, 6])
def test_vector_derivatives_finite_difference(k, rng):
    traj = SplineTrajectory(Euclidean(2), k, 0.0, 0.3, rng.normal(size=(k + 3, 2)))
    lo, hi = traj.domain
    h = 1e-5
    for t in rng.uniform(lo + 2 * h, hi - 2 * h, 20):
        for deriv in (0, 1):
            fd = (eval_vector(t + h, traj, deriv) - eval_vector(t - h, traj, deriv)) / (2 * h)
            assert rel_err(eval_vector(t, traj, deriv + 1), fd) <= 1e-6


def test_eval_vector_rejects_lie_group(rng):
    with pytest.raises(TypeError):
        eval_vector(0.0, _random_spline(SO3, rng, 4, start=-1.5))


@pytest.mark.parametrize("delta", [-1e-3, 1e-3])
def test_out_of_domain(delta, rng):
    traj = _random_spline(SE3, rng, 4)
    lo, hi = traj.domain
    t = lo + delta if delta < 0 else hi + delta
    with pytest.raises(OutOfDomain):
        eval_lie(t, traj)
    with pytest.raises(OutOfDomain):
        eval_vector(t, SplineTrajectory(Euclidean(1), 4, 0.0, 0.5, np.zeros((7, 1))))


def test_domain_and_covering():
    traj = SplineTrajectory.covering(SE3, 4, 1.0, 2.05, 0.1)
    lo, hi = traj.domain
    assert lo == pytest.approx(1.0) and hi >= 2.05 - 1e-12
    assert traj.num_segments == 11 and traj.num_blocks == 14
    assert traj.num_floats == 14 * 6


def test_greville_abscissae_average_knots():
    traj = SplineTrajectory(Euclidean(1), 4, 0.0, 0.5, np.zeros((6, 1)))
    knots = traj.knot(np.arange(1, 11))
    expected = [knots[i + 1:i + traj.k].mean() for i in range(traj.num_blocks)]
    np.testing.assert_allclose(traj.greville(), expected, atol=1e-14)


def test_left_edge_is_reachable(rng):
    traj = _random_spline(SO3, rng, 4)
    lo = traj.domain[0]
    s = eval_lie(lo, traj)
    s_right = eval_lie(lo + 1e-10, traj)
    assert np.max(np.abs(s.g - s_right.g)) <= 1e-8


# ---------------------------------------------------------------------------
# Lie evaluation
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("k", [2, 3, 4, 5, 6])
def test_lie_equals_vector_on_euclidean(k, rng):
    traj = SplineTrajectory(Euclidean(3), k, 0.0, 0.2, rng.normal(size=(k + 5, 3)))
    t = rng.uniform(*traj.domain, size=50)
    lie = traj.sample(t, force_lie=True)
    for deriv, got in enumerate([lie.g, lie.vel, lie.acc]):
        expected = eval_vector(t, traj, deriv)
        np.testing.assert_allclose(got, expected, atol=1e-13 * max(1.0, np.max(np.abs(expected))))


@pytest.mark.parametrize("group", LIE, ids=lambda g: g.tag)
def test_constant_control_points_rest(group, rng):
    g0 = group.random(rng)
    traj = SplineTrajectory(group, 4, 0.0, 0.1, np.stack([g0] * 6))
    for t in np.linspace(*traj.domain, 5):
        s = eval_lie(t, traj)
        np.testing.assert_allclose(s.g, g0, atol=1e-14)
        np.testing.assert_allclose(s.vel, 0.0, atol=1e-14)
        np.testing.assert_allclose(s.acc, 0.0, atol=1e-14)


def test_antipodal_control_points_raise():
    ctrl = np.stack([np.eye(3), SO3.exp(np.array([np.pi, 0.0, 0.0]))] + [np.eye(3)] * 2)
    traj = SplineTrajectory(SO3, 4, 0.0, 1.0, ctrl)
    with pytest.raises(AngleAtBoundary):
        eval_lie(traj.domain[0] + 0.5, traj)


@pytest.mark.parametrize("group", LIE, ids=lambda g: g.tag)
@pytest.mark.parametrize("k", [3, 4, 6])
def test_lie_derivatives_finite_difference(group, k, rng):
    """Velocity and acceleration against central differences of the left displacement."""
    h = 1e-4
    worst_v = worst_a = 0.0
    for _ in range(5):
        traj = _random_spline(group, rng, k)
        lo, hi = traj.domain
        t = rng.uniform(lo + 2 * h, hi - 2 * h, 10)
        mid, plus, minus = traj.sample(t), traj.sample(t + h), traj.sample(t - h)
        xi_p, xi_m = group.between(plus.g, mid.g), group.between(minus.g, mid.g)
        worst_v = max(worst_v, rel_err(mid.vel, (xi_p - xi_m) / (2 * h)))
        worst_a = max(worst_a, rel_err(mid.acc, (xi_p + xi_m) / h ** 2))
    assert worst_v <= 1e-5
    assert worst_a <= 1e-5


@pytest.mark.parametrize("group", LIE + [Euclidean(3)], ids=lambda g: g.tag)
@pytest.mark.parametrize("k", [2, 3, 4, 5, 6])
def test_continuity_across_knots(group, k, rng):
    """Value and the first k-2 derivatives are continuous at every interior knot."""
    eps = 1e-10
    crossings = 0
    for _ in range(3):
        traj = _random_spline(group, rng, k, n_ctrl=k + 25, period=0.5)
        knots = traj.knot(np.arange(traj.k + 1, traj.num_blocks + 1))
        left, right = traj.sample(knots - eps), traj.sample(knots + eps)
        assert np.max(np.abs(group.between(right.g, left.g))) <= 1e-8
        if k >= 3:
            assert np.max(np.abs(right.vel - left.vel)) <= 1e-8
        if k >= 4:
            assert np.max(np.abs(right.acc - left.acc)) <= 1e-8
        crossings += knots.size
    assert crossings >= 60


def test_acceleration_jumps_for_quadratic_splines(rng):
    """Order 3 is only C^1, so the check above is not vacuous."""
    traj = _random_spline(SO3, rng, 3, n_ctrl=10)
    knots = traj.knot(np.arange(traj.k + 1, traj.num_blocks + 1))
    left, right = traj.sample(knots - 1e-10), traj.sample(knots + 1e-10)
    assert np.max(np.abs(right.acc - left.acc)) > 1e-3


@pytest.mark.parametrize("group", [SO3, SE3], ids=lambda g: g.tag)
@pytest.mark.parametrize("k", [2, 4, 6])
def test_local_support(group, k, rng):
    traj = _random_spline(group, rng, k, n_ctrl=k + 6, period=0.5)
    lo = traj.domain[0]
    t = np.linspace(*traj.domain, 401)
    base = traj.sample(t)
    for l in range(traj.num_blocks):
        delta = np.zeros((traj.num_blocks, group.dim))
        delta[l] = 0.1
        moved = traj.retract(delta.ravel()).sample(t)
        changed = np.max(np.abs(group.between(moved.g, base.g)), axis=1) > 1e-14
        window = (t > lo + (l - k + 1) * traj.knot_period - 1e-12) & (t < lo + (l + 1) * traj.knot_period + 1e-12)
        assert not np.any(changed & ~window)


# ---------------------------------------------------------------------------
# control-point Jacobians
# ---------------------------------------------------------------------------

def fd_spline_jacobian(traj, t, h=1e-6):
    """Central differences of ``(g, g_dot, g_ddot)`` at ``t`` w.r.t. the k active control points.

    Every perturbed copy of the active window is laid out as its own block of
    ``k`` control points; segment ``c * k`` of the stacked spline then reads
    exactly copy ``c``, so all columns come from one evaluation.
    """
    G, k, d = traj.group, traj.k, traj.group.dim
    (i,), (u,) = traj.locate([t])
    window = traj.ctrl[i:i + k]
    deltas = np.zeros((1 + 2 * k * d, k, d))  # unperturbed copy, then +h/-h for every column
    for c in range(k * d):
        slot, col = divmod(c, d)
        deltas[1 + 2 * c, slot, col] = h
        deltas[2 + 2 * c, slot, col] = -h
    copies = deltas.shape[0]
    ctrl = G.retract(np.broadcast_to(window, (copies,) + window.shape).reshape((-1,) + window.shape[1:]),
                     deltas.reshape(-1, d))
    stacked = SplineTrajectory(G, k, 0.0, traj.knot_period, ctrl)
    lo = stacked.domain[0]
    # u is in (0, 1] so the query lands inside segment c*k (u = 0 only at the left domain edge)
    query = lo + (k * np.arange(copies) + u) * traj.knot_period
    if u == 0.0:
        query[1:] += 1e-12 * traj.knot_period
    out = stacked.sample(query)
    err = np.concatenate([G.between(out.g[1:], out.g[:1]), out.vel[1:] - out.vel[0], out.acc[1:] - out.acc[0]],
                         axis=-1)
    return ((err[0::2] - err[1::2]) / (2 * h)).T


def spline_jacobian(traj, t):
    s = traj.sample([t], jacobians=True, force_lie=True)
    d = traj.group.dim
    return s.jac[0].reshape(3 * d, traj.k * d)


@pytest.mark.parametrize("group", [SO3, SE3], ids=lambda g: g.tag)
@pytest.mark.parametrize("k", [2, 3, 4, 5, 6])
def test_lie_jacobians_finite_difference(group, k, rng):
    worst = 0.0
    for _ in range(10):
        traj = _random_spline(group, rng, k)
        t = float(rng.uniform(*traj.domain))
        worst = max(worst, rel_err(spline_jacobian(traj, t), fd_spline_jacobian(traj, t)))
    assert worst <= 1e-6


def test_batched_oracle_matches_column_by_column(rng):
    group, k = SE3, 4
    traj = _random_spline(group, rng, k)
    t = float(rng.uniform(*traj.domain))
    (i,), _ = traj.locate([t])
    base = traj.sample([t])

    def perturbed(x, slot, col):
        delta = np.zeros((traj.num_blocks, group.dim))
        delta[i + slot] = x
        s = traj.retract(delta.ravel()).sample([t])
        return np.concatenate([group.between(s.g, base.g)[0], s.vel[0] - base.vel[0], s.acc[0] - base.acc[0]])

    cols = [central_diff(lambda x: perturbed(x, slot, None), np.zeros(group.dim)) for slot in range(k)]
    np.testing.assert_allclose(fd_spline_jacobian(traj, t), np.hstack(cols), atol=1e-8)


def test_lie_jacobians_zero_outside_window(rng):
    traj = _random_spline(SE3, rng, 4, n_ctrl=10)
    t = traj.domain[0] + 2.5 * traj.knot_period
    (i,), _ = traj.locate([t])
    jac = lie_jacobians(t, traj)
    for l, blocks in jac.items():
        inside = i <= l < i + traj.k
        for name in ("g", "vel", "acc"):
            if not inside:
                np.testing.assert_array_equal(blocks[name], 0.0)
    assert any(np.any(jac[l]["g"] != 0) for l in range(i, i + traj.k))


def test_euclidean_jacobians_are_basis_weights(rng):
    traj = SplineTrajectory(Euclidean(2), 4, 0.0, 0.2, rng.normal(size=(8, 2)))
    t = float(rng.uniform(*traj.domain))
    (i,), (u,) = traj.locate([t])
    jac = lie_jacobians(t, traj)
    for deriv, name in enumerate(("g", "vel", "acc")):
        w = traj.weights([u], deriv)[0]
        for j in range(traj.k):
            np.testing.assert_allclose(jac[i + j][name], w[j] * np.eye(2), atol=1e-12)


@given(u=st.floats(0.0, 1.0), k=st.integers(2, 8))
def test_weights_partition_unity(u, k):
    traj = SplineTrajectory(Euclidean(1), k, 0.0, 1.0, np.zeros((k, 1)))
    w = traj.weights([u])[0]
    assert w.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(w >= -1e-12)
    assert traj.weights([u], 1)[0].sum() == pytest.approx(0.0, abs=1e-10)


@pytest.mark.parametrize("k", [3, 4, 5, 6])
def test_leaving_control_point_has_exactly_zero_weight_at_knot(k):
    """At u = 1 the first control point of the window no longer contributes (up to derivative k-2)."""
    for deriv in range(min(k - 1, 3)):
        w = SplineTrajectory(Euclidean(1), k, 0.0, 1.0, np.zeros((k, 1))).weights([1.0], deriv)[0]
        assert w[0] == 0.0


def test_knot_queries_snap_onto_the_knot():
    traj = SplineTrajectory(Euclidean(1), 4, 0.0, 0.1, np.zeros((40, 1)))
    lo = traj.domain[0]
    i, u = traj.locate(lo + np.array([0.3, 0.6, 0.9, 2.1]))  # none of these is exact in binary
    np.testing.assert_array_equal(u, 1.0)
    np.testing.assert_array_equal(i, [2, 5, 8, 20])


@pytest.mark.parametrize("k", [3, 4, 6])
def test_cumulative_basis_at_segment_end_is_continuous(k):
    C = blending_matrix(k)
    u = np.array([1.0 - 1e-9, 1.0])
    for deriv in range(k - 1):
        b = cumulative_basis(u, k, deriv)
        np.testing.assert_allclose(b[0], b[1], atol=1e-7 * max(1.0, np.max(np.abs(C))) * 10 ** deriv)
