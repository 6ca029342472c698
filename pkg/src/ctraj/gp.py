"""Gaussian-process trajectories: posterior-mean interpolation between states.

A GP trajectory stores a full kinematic state at every estimation time and
interpolates with ``x(tau) = Lambda(tau) x_n + Omega(tau) x_{n+1}``.  On Lie
groups the same coefficients act on the local variables
``gamma_n(t) = [xi_n, xi_n_dot, xi_n_ddot]`` of the left segment endpoint.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import scipy.integrate
import scipy.linalg

from .errors import OutOfRange, OutOfSegment, SingularGramian
from .manifold import Euclidean, KinematicState, LieGroup
from .motion_model import LinearSystem, ModelOrder, _as_order, covariance_scalar, transition_scalar
from .trajectory import TrajSample

_TIME_EPS = 1e-12


# ---------------------------------------------------------------------------
# interpolation coefficients
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InterpCoeffs:
    Lambda: np.ndarray
    Omega: np.ndarray
    segment: int
    s: float  # (tau - t_n) / (t_{n+1} - t_n)


def _unit_coeffs(s: np.ndarray, m: int):
    """Scalar ``Lambda_hat(s), Omega_hat(s)`` on a unit-length segment, batched."""
    s = np.asarray(s, dtype=float)
    n = s.shape[0]
    order = ModelOrder(m)
    Qinv1 = np.linalg.inv(covariance_scalar(1.0, order))
    Phi1 = transition_scalar(1.0, order)
    # Q_hat(s) and Phi_hat(1 - s)^T, built entrywise so they vectorise over s
    p = 2 * m - 1
    Qs = np.zeros((n, m, m))
    fact = [1.0, 1.0, 2.0]
    for i in range(m):
        for j in range(m):
            e = p - i - j
            # int_0^s (s-u)^(m-1-i)/(m-1-i)! (s-u)^(m-1-j)/(m-1-j)! du
            Qs[:, i, j] = s ** e / (e * fact[m - 1 - i] * fact[m - 1 - j])
    r = 1.0 - s
    PhiT = np.zeros((n, m, m))
    for i in range(m):
        for j in range(i, m):
            PhiT[:, j, i] = r ** (j - i) / fact[j - i]
    Om = Qs @ PhiT @ Qinv1
    La = _phi_unit(s, m) - Om @ Phi1
    return La, Om


def _phi_unit(s, m):
    n = s.shape[0]
    out = np.zeros((n, m, m))
    fact = [1.0, 1.0, 2.0]
    for i in range(m):
        for j in range(i, m):
            out[:, i, j] = s ** (j - i) / fact[j - i]
    return out


def scalar_coeffs(tau, t_n, t_n1, m: int):
    """Batched scalar coefficients for segment lengths ``T = t_n1 - t_n``.

    Works in time-normalised coordinates ``[p, v T, a T^2]`` so that
    short segments do not need to invert a badly scaled ``Q_T``.
    """
    tau = np.asarray(tau, dtype=float)
    T = np.asarray(t_n1, dtype=float) - np.asarray(t_n, dtype=float)
    s = (tau - t_n) / T
    La, Om = _unit_coeffs(s, m)
    powers = T[..., None] ** np.arange(m)  # S = diag(1, T, T^2)
    scale = powers[:, None, :] / powers[:, :, None]  # S^-1 M S -> M_ij T^(j-i)
    return La * scale, Om * scale


def interp_coeffs(tau: float, t_n: float, t_n1: float, order, Q=None) -> InterpCoeffs:
    """``Lambda``/``Omega`` for one query; ``Q`` only fixes the block size.

    For the stationary WNOA/WNOJ priors both coefficients are Kronecker
    products with the identity, so the power spectral density cancels.
    """
    order = _as_order(order)
    if not t_n < t_n1:
        raise OutOfSegment(f"empty segment [{t_n}, {t_n1}]")
    if tau < t_n - _TIME_EPS or tau > t_n1 + _TIME_EPS:
        raise OutOfSegment(f"tau={tau} outside [{t_n}, {t_n1}]")
    d = 1 if Q is None else np.atleast_2d(Q).shape[0]
    La, Om = scalar_coeffs(np.array([tau]), np.array([t_n]), np.array([t_n1]), order.blocks)
    I = np.eye(d)
    return InterpCoeffs(np.kron(La[0], I), np.kron(Om[0], I), 0, (tau - t_n) / (t_n1 - t_n))


def interp_linear_system(tau: float, t_n: float, t_n1: float, x_n, x_n1, sys: LinearSystem) -> np.ndarray:
    """Posterior mean between two states of a general linear system.

    Includes the prior-mean terms driven by a known input ``sys.u``; they
    reduce to ``F(t_n, tau) - Omega F(t_n, t_n1)`` where ``F`` is the forced
    response.
    """
    x_n = np.asarray(x_n, dtype=float)
    x_n1 = np.asarray(x_n1, dtype=float)
    if tau <= t_n:
        return x_n.copy()
    Phi_tau = sys.transition(tau - t_n)
    if tau >= t_n1:
        return x_n1.copy()
    Omega = sys.covariance(tau - t_n) @ sys.transition(t_n1 - tau).T @ np.linalg.inv(sys.covariance(t_n1 - t_n))
    Lambda = Phi_tau - Omega @ sys.transition(t_n1 - t_n)
    x = Lambda @ x_n + Omega @ x_n1
    if sys.u is not None:
        x = x + sys.input_response(t_n, tau) - Omega @ sys.input_response(t_n, t_n1)
    return x


def min_norm_interp(tau: float, x_n, x_n1, sys: LinearSystem, t_n: float = 0.0, t_n1: float = 1.0) -> np.ndarray:
    """Minimum-energy trajectory between two boundary states, evaluated at ``tau``.

    Solves ``min int ||w||^2_{Q^-1}`` subject to the dynamics and both
    boundary conditions with quadrature and matrix exponentials only, so it
    is independent of the closed-form GP coefficients.
    """
    x_n = np.asarray(x_n, dtype=float)
    x_n1 = np.asarray(x_n1, dtype=float)
    A, L, Q, B = sys.A, sys.L, sys.Q, sys.B
    LQL = L @ Q @ L.T

    def phi(dt):
        return scipy.linalg.expm(A * dt)

    def gram_integrand(s, end):
        P = phi(end - s)
        return P @ LQL @ P.T

    opts = dict(epsabs=1e-14, epsrel=1e-13)
    G, _ = scipy.integrate.quad_vec(lambda s: gram_integrand(s, t_n1), t_n, t_n1, **opts)
    if np.linalg.cond(G) > 1e12:
        raise SingularGramian("reachability Gramian condition number exceeds 1e12")

    def forced(t0, t1):
        if sys.u is None or t1 <= t0:
            return np.zeros_like(x_n)
        val, _ = scipy.integrate.quad_vec(lambda s: phi(t1 - s) @ B @ np.atleast_1d(sys.u(s)), t0, t1, **opts)
        return val

    gap = x_n1 - phi(t_n1 - t_n) @ x_n - forced(t_n, t_n1)
    lam = np.linalg.solve(G, gap)
    if tau <= t_n:
        return x_n.copy()
    # optimal control w(s) = Q L^T Phi(t1, s)^T lam drives the state to tau
    steer, _ = scipy.integrate.quad_vec(
        lambda s: phi(tau - s) @ LQL @ phi(t_n1 - s).T, t_n, tau, **opts)
    return phi(tau - t_n) @ x_n + forced(t_n, tau) + steer @ lam


# ---------------------------------------------------------------------------
# trajectory
# ---------------------------------------------------------------------------

def _mv(M, v):
    return np.einsum("...ij,...j->...i", M, v)


@dataclass(frozen=True)
class GpTrajectory:
    """States ``{g, g_dot[, g_ddot]}`` at strictly increasing estimation times."""

    group: LieGroup
    order: ModelOrder
    times: np.ndarray
    g: np.ndarray
    vel: np.ndarray
    acc: Optional[np.ndarray]
    Q: np.ndarray

    def __post_init__(self):
        order = _as_order(self.order)
        object.__setattr__(self, "order", order)
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size < 2 or np.any(np.diff(times) <= 0):
            raise ValueError("estimation times must be strictly increasing with at least two entries")
        N, d = times.size, self.group.dim
        g = np.asarray(self.g, dtype=float)
        vel = np.asarray(self.vel, dtype=float)
        if g.shape != (N,) + self.group.element_shape or vel.shape != (N, d):
            raise ValueError("state arrays do not match the estimation times")
        acc = None
        if order is ModelOrder.WNOJ:
            acc = np.zeros((N, d)) if self.acc is None else np.asarray(self.acc, dtype=float)
            if acc.shape != (N, d):
                raise ValueError("acceleration array does not match the estimation times")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "vel", vel)
        object.__setattr__(self, "acc", acc)
        object.__setattr__(self, "Q", np.atleast_2d(np.asarray(self.Q, dtype=float)) * np.ones((1, 1)))

    # -- construction ------------------------------------------------------
    @classmethod
    def from_states(cls, times, states: list[KinematicState], Q, order=None) -> "GpTrajectory":
        group = states[0].group
        if any(s.group != group for s in states):
            raise ValueError("all states must live on one group")
        if order is None:
            order = ModelOrder.WNOJ if states[0].acc is not None else ModelOrder.WNOA
        acc = np.stack([s.acc for s in states]) if states[0].acc is not None else None
        return cls(group, order, times, np.stack([s.g for s in states]),
                   np.stack([s.vel for s in states]), acc, Q)

    @classmethod
    def identity(cls, group: LieGroup, times, Q, order=ModelOrder.WNOJ) -> "GpTrajectory":
        times = np.asarray(times, dtype=float)
        N, d = times.size, group.dim
        return cls(group, order, times, group.identity((N,)), np.zeros((N, d)), np.zeros((N, d)), Q)

    # -- contract ----------------------------------------------------------
    @property
    def domain(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])

    @property
    def num_blocks(self) -> int:
        return self.times.size

    @property
    def block_dim(self) -> int:
        return self.order.blocks * self.group.dim

    @property
    def num_floats(self) -> int:
        return self.num_blocks * self.block_dim

    def state(self, i: int) -> KinematicState:
        acc = None if self.acc is None else self.acc[i]
        return KinematicState(self.group, self.g[i], self.vel[i], acc)

    def states_vector(self) -> np.ndarray:
        """Stacked ``[x_0; ...; x_{N-1}]`` for Euclidean trajectories."""
        parts = [self.g, self.vel] + ([self.acc] if self.acc is not None else [])
        return np.concatenate(parts, axis=1)

    def retract(self, delta: np.ndarray) -> "GpTrajectory":
        d = self.group.dim
        delta = np.asarray(delta, dtype=float).reshape(self.num_blocks, self.block_dim)
        g = self.group.retract(self.g, delta[:, :d])
        vel = self.vel + delta[:, d:2 * d]
        acc = None if self.acc is None else self.acc + delta[:, 2 * d:]
        return replace(self, g=g, vel=vel, acc=acc)

    def segment_of(self, tau) -> np.ndarray:
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        lo, hi = self.domain
        if np.any(tau < lo - _TIME_EPS) or np.any(tau > hi + _TIME_EPS):
            raise OutOfRange(f"query outside estimation span [{lo}, {hi}]")
        n = np.searchsorted(self.times, tau, side="left") - 1
        return np.clip(n, 0, self.num_blocks - 2)

    # -- evaluation --------------------------------------------------------
    def sample(self, times, jacobians: bool = False) -> TrajSample:
        tau = np.atleast_1d(np.asarray(times, dtype=float))
        n = self.segment_of(tau)
        G, d, m = self.group, self.group.dim, self.order.blocks
        t0, t1 = self.times[n], self.times[n + 1]
        tau = np.clip(tau, t0, t1)
        La, Om = scalar_coeffs(tau, t0, t1, m)
        g0, g1 = self.g[n], self.g[n + 1]
        v0, v1 = self.vel[n], self.vel[n + 1]
        k = tau.size
        zeros = np.zeros((k, d))
        a0 = self.acc[n] if m == 3 else zeros
        a1 = self.acc[n + 1] if m == 3 else zeros

        # local variables of the right endpoint
        xi1 = G.between(g1, g0)
        Jinv1 = G.left_jacobian_inv(xi1)
        xid1 = _mv(Jinv1, v1)
        ad_v1 = G.ad(v1)
        gam0 = np.stack([zeros, v0, a0][:m], axis=1)  # (k, m, d)
        gam1_list = [xi1, xid1]
        if m == 3:
            gam1_list.append(_mv(Jinv1, a1) - 0.5 * _mv(G.ad(xid1), v1))
        gam1 = np.stack(gam1_list, axis=1)
        gam = np.einsum("kij,kjd->kid", La, gam0) + np.einsum("kij,kjd->kid", Om, gam1)
        xi, xid = gam[:, 0], gam[:, 1]

        Jl = G.left_jacobian(xi)
        g = G.compose(G.exp(xi), g0)
        vel = _mv(Jl, xid)
        acc = None
        if m == 3:
            w = gam[:, 2] + 0.5 * _mv(G.ad(xid), vel)
            acc = _mv(Jl, w)

        # estimation-time queries return the stored state exactly
        at0 = np.abs(tau - t0) <= _TIME_EPS
        at1 = (np.abs(tau - t1) <= _TIME_EPS) & ~at0
        for mask, src in ((at0, n), (at1, n + 1)):
            if np.any(mask):
                g[mask] = self.g[src[mask]]
                vel[mask] = self.vel[src[mask]]
                if m == 3:
                    acc[mask] = self.acc[src[mask]]

        idx = np.stack([n, n + 1], axis=1)
        out = TrajSample(g, vel, acc, idx)
        if not jacobians:
            return out

        P = m * d
        I = np.broadcast_to(np.eye(d), (k, d, d))
        # d gamma1 / d x_{n+1}  and  d gamma1 / d g_n
        dxi1_g0 = -G.right_jacobian_inv(xi1)
        dxi1_g1 = Jinv1
        Dg1 = np.zeros((k, m, d, P))  # rows: local block, cols: x_{n+1}
        Dg0 = np.zeros((k, m, d, P))  # only g_n column nonzero
        Dg1[:, 0, :, :d] = dxi1_g1
        Dg0[:, 0, :, :d] = dxi1_g0
        dxid_dxi = 0.5 * ad_v1
        Dg1[:, 1, :, :d] = dxid_dxi @ dxi1_g1
        Dg1[:, 1, :, d:2 * d] = Jinv1
        Dg0[:, 1, :, :d] = dxid_dxi @ dxi1_g0
        if m == 3:
            dxidd_dxi = 0.5 * G.ad(a1) + 0.5 * ad_v1 @ dxid_dxi
            Dg1[:, 2, :, :d] = dxidd_dxi @ dxi1_g1
            Dg1[:, 2, :, d:2 * d] = -0.5 * (G.ad(xid1) - ad_v1 @ Jinv1)
            Dg1[:, 2, :, 2 * d:] = Jinv1
            Dg0[:, 2, :, :d] = dxidd_dxi @ dxi1_g0
        D0 = np.zeros((k, m, d, P))  # gamma_n = [0, v_n, a_n]
        for b in range(1, m):
            D0[:, b, :, b * d:(b + 1) * d] = I
        dgam_n = np.einsum("kij,kjdp->kidp", La, D0) + np.einsum("kij,kjdp->kidp", Om, Dg0)
        dgam_n1 = np.einsum("kij,kjdp->kidp", Om, Dg1)

        # global variables as functions of the local ones
        Gm = np.zeros((k, 3, d, m, d))
        Gm[:, 0, :, 0] = Jl
        Gm[:, 1, :, 0] = -0.5 * G.ad(xid)
        Gm[:, 1, :, 1] = Jl
        if m == 3:
            half_xid = 0.5 * G.ad(xid)
            Gm[:, 2, :, 0] = -0.5 * G.ad(w) + Jl @ half_xid @ Gm[:, 1, :, 0]
            Gm[:, 2, :, 1] = -0.5 * Jl @ G.ad(vel) + Jl @ half_xid @ Jl
            Gm[:, 2, :, 2] = Jl
        jac = np.zeros((k, 3, d, 2, P))
        jac[:, :, :, 0] = np.einsum("krdbe,kbep->krdp", Gm, dgam_n)
        jac[:, :, :, 1] = np.einsum("krdbe,kbep->krdp", Gm, dgam_n1)
        jac[:, 0, :, 0, :d] += G.adjoint(G.exp(xi))
        for mask, slot in ((at0, 0), (at1, 1)):
            if np.any(mask):
                jac[mask] = 0.0
                for b in range(m):
                    jac[mask, b, :, slot, b * d:(b + 1) * d] = np.eye(d)
        out.jac = jac.reshape(k, 3 * d, 2, P)
        return out

    def interp(self, tau: float) -> KinematicState:
        s = self.sample([tau])
        return KinematicState(self.group, s.g[0], s.vel[0], None if s.acc is None else s.acc[0])


def interp_linear(tau: float, traj: GpTrajectory) -> np.ndarray:
    """Stacked state ``Lambda x_n + Omega x_{n+1}`` of a Euclidean trajectory."""
    if not isinstance(traj.group, Euclidean):
        raise TypeError("interp_linear needs a Euclidean trajectory")
    n = int(traj.segment_of(tau)[0])
    t0, t1 = traj.times[n], traj.times[n + 1]
    X = traj.states_vector()
    if abs(tau - t0) <= _TIME_EPS:
        return X[n].copy()
    if abs(tau - t1) <= _TIME_EPS:
        return X[n + 1].copy()
    c = interp_coeffs(tau, t0, t1, traj.order, traj.Q)
    return c.Lambda @ X[n] + c.Omega @ X[n + 1]


def interp_lie(tau: float, traj: GpTrajectory) -> KinematicState:
    return traj.interp(tau)


def interp_lie_jacobians(tau: float, traj: GpTrajectory) -> dict:
    """Jacobians of ``{g, g_dot, g_ddot}`` at ``tau`` w.r.t. the bracketing states.

    Keys ``(out, param, side)`` with ``out`` in ``g/vel/acc``, ``param`` in
    ``g/vel/acc`` and ``side`` 0 for ``x_n`` and 1 for ``x_{n+1}``.
    """
    s = traj.sample([tau], jacobians=True)
    d, m = traj.group.dim, traj.order.blocks
    names = ["g", "vel", "acc"]
    out = {}
    for r in range(m):
        for c in range(m):
            for side in (0, 1):
                out[(names[r], names[c], side)] = s.jac[0, r * d:(r + 1) * d, side, c * d:(c + 1) * d]
    return out
