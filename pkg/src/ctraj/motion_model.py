"""White-noise-on-acceleration (WNOA) and white-noise-on-jerk (WNOJ) priors.

Linear models use the stacked state ``x = [p; v]`` or ``[p; v; a]`` with each
block ``d`` wide, so every matrix is ``kron(scalar_matrix, I_d)``.  The Lie
variants apply the same model to the local variable
``xi_j(t) = Log(g(t) g_j^-1)`` and its derivatives.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.integrate
import scipy.linalg

from .errors import DegenerateInterval
from .manifold import KinematicState, LieGroup


class ModelOrder(enum.Enum):
    WNOA = 2
    WNOJ = 3

    @property
    def blocks(self) -> int:
        return self.value


def _as_order(order) -> ModelOrder:
    if isinstance(order, ModelOrder):
        return order
    if isinstance(order, str):
        return ModelOrder[order.upper()]
    return ModelOrder(int(order))


def transition_scalar(dt: float, order) -> np.ndarray:
    """Transition matrix of a single coordinate (``blocks x blocks``)."""
    order = _as_order(order)
    if order is ModelOrder.WNOJ:
        return np.array([[1.0, dt, 0.5 * dt * dt], [0.0, 1.0, dt], [0.0, 0.0, 1.0]])
    return np.array([[1.0, dt], [0.0, 1.0]])


def covariance_scalar(dt: float, order) -> np.ndarray:
    """Process covariance of a single coordinate driven by unit-PSD noise."""
    order = _as_order(order)
    if order is ModelOrder.WNOJ:
        d2, d3, d4, d5 = dt ** 2, dt ** 3, dt ** 4, dt ** 5
        return np.array([[d5 / 20.0, d4 / 8.0, d3 / 6.0],
                         [d4 / 8.0, d3 / 3.0, d2 / 2.0],
                         [d3 / 6.0, d2 / 2.0, dt]])
    return np.array([[dt ** 3 / 3.0, dt ** 2 / 2.0], [dt ** 2 / 2.0, dt]])


def transition_matrix(dt: float, order, d: int) -> np.ndarray:
    """``Phi(t + dt, t)`` for the ``d``-dimensional WNOA/WNOJ model."""
    if dt < 0:
        raise DegenerateInterval(f"transition over negative interval {dt}")
    return np.kron(transition_scalar(dt, order), np.eye(d))


def _as_psd(Q, d: Optional[int] = None) -> np.ndarray:
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if Q.shape == (1, 1) and d is not None and d > 1:
        Q = Q[0, 0] * np.eye(d)
    return Q


def process_covariance(dt: float, order, Q) -> np.ndarray:
    """Closed-form ``Q_dt = int_0^dt Phi(s) L Q L^T Phi(s)^T ds``."""
    if dt <= 0:
        raise DegenerateInterval(f"process covariance needs dt > 0, got {dt}")
    return np.kron(covariance_scalar(dt, order), _as_psd(Q))


def process_information_sqrt(dt: float, order, Q) -> np.ndarray:
    """Upper factor ``L`` with ``L^T L = Q_dt^-1``, used to whiten prior residuals."""
    cov = process_covariance(dt, order, Q)
    return whitening_from_covariance(cov)


def whitening_from_covariance(cov: np.ndarray) -> np.ndarray:
    """Return ``L`` with ``L^T L = cov^-1`` (so ``||L r||^2 = r^T cov^-1 r``)."""
    info = np.linalg.inv(cov)
    info = 0.5 * (info + info.T)
    return np.linalg.cholesky(info).T


# ---------------------------------------------------------------------------
# general linear time-invariant systems
# ---------------------------------------------------------------------------

@dataclass
class LinearSystem:
    """``x_dot = A x + B u(t) + L w(t)``, ``w ~ GP(0, Q delta)``."""

    A: np.ndarray
    B: np.ndarray
    L: np.ndarray
    Q: np.ndarray
    u: Optional[Callable[[float], np.ndarray]] = None
    order: Optional[ModelOrder] = None

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.B = np.atleast_2d(np.asarray(self.B, dtype=float))
        self.L = np.atleast_2d(np.asarray(self.L, dtype=float))
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.B.shape[0] != n or self.L.shape[0] != n:
            raise ValueError("inconsistent system matrix dimensions")
        if self.Q.shape != (self.L.shape[1], self.L.shape[1]):
            raise ValueError("Q must match the noise input dimension")

    @classmethod
    def from_order(cls, order, Q, u=None) -> "LinearSystem":
        order = _as_order(order)
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        d = Q.shape[0]
        m = order.blocks
        shift = np.eye(m, k=1)
        last = np.zeros((m, 1))
        last[-1, 0] = 1.0
        L = np.kron(last, np.eye(d))
        return cls(np.kron(shift, np.eye(d)), L.copy(), L, Q, u=u, order=order)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def transition(self, dt: float) -> np.ndarray:
        if self.order is not None:
            return transition_matrix(dt, self.order, self.Q.shape[0])
        return scipy.linalg.expm(self.A * dt)

    def covariance(self, dt: float) -> np.ndarray:
        if self.order is not None:
            return process_covariance(dt, self.order, self.Q)
        if dt <= 0:
            raise DegenerateInterval(f"process covariance needs dt > 0, got {dt}")
        # Van Loan block exponential
        n = self.n
        M = np.zeros((2 * n, 2 * n))
        M[:n, :n] = -self.A
        M[:n, n:] = self.L @ self.Q @ self.L.T
        M[n:, n:] = self.A.T
        E = scipy.linalg.expm(M * dt)
        Phi = E[n:, n:].T
        cov = Phi @ E[:n, n:]
        return 0.5 * (cov + cov.T)

    def input_response(self, t0: float, t1: float) -> np.ndarray:
        """``int_{t0}^{t1} Phi(t1, s) B u(s) ds`` (zero when there is no input)."""
        if self.u is None or t1 <= t0:
            return np.zeros(self.n)

        def integrand(s):
            return self.transition(t1 - s) @ self.B @ np.atleast_1d(self.u(s))

        val, _ = scipy.integrate.quad_vec(integrand, t0, t1, epsabs=1e-13, epsrel=1e-12)
        return val


def linear_prior_residual(x_j, x_j1, dt: float, sys: LinearSystem, t_j: float = 0.0) -> np.ndarray:
    """``x_{j+1} - x_check_{j+1} - Phi (x_j - x_check_j)``.

    With a known input the prior means differ by the forced response over
    ``[t_j, t_j + dt]``; without one the residual is ``x_{j+1} - Phi x_j``.
    """
    x_j = np.asarray(x_j, dtype=float)
    x_j1 = np.asarray(x_j1, dtype=float)
    r = x_j1 - sys.transition(dt) @ x_j
    if sys.u is not None:
        r = r - sys.input_response(t_j, t_j + dt)
    return r


# ---------------------------------------------------------------------------
# Lie-group prior
# ---------------------------------------------------------------------------

def _mv(M, v):
    return np.einsum("...ij,...j->...i", M, v)


def lie_prior_batch(group: LieGroup, order, g0, v0, a0, g1, v1, a1, dt, jacobians: bool = True):
    """Batched Lie motion-prior residuals.

    Arguments carry a leading batch axis (``a0``/``a1`` are ignored for WNOA).
    Returns ``(r, J0, J1)`` with ``r`` of shape ``(n, m*d)`` and ``J0``/``J1``
    the ``(n, m*d, m*d)`` Jacobians w.r.t. the stacked ``[g; g_dot; g_ddot]``
    perturbations of the earlier and later state.
    """
    order = _as_order(order)
    d = group.dim
    m = order.blocks
    dt = np.asarray(dt, dtype=float)
    if np.any(dt <= 0):
        raise DegenerateInterval("motion prior needs strictly increasing times")
    dtc = dt[..., None]
    n = np.asarray(v0).shape[0]
    xi = group.between(g1, g0)
    if group.is_abelian:
        Jinv = np.broadcast_to(np.eye(d), (n, d, d))
    else:
        Jinv = group.left_jacobian_inv(xi)
    xid = _mv(Jinv, v1)
    r = np.zeros((n, m * d))
    if m == 3:
        r[:, :d] = xi - dtc * v0 - 0.5 * dtc ** 2 * a0
        r[:, d:2 * d] = xid - v0 - dtc * a0
        r[:, 2 * d:] = _mv(Jinv, a1) - 0.5 * _mv(group.ad(xid), v1) - a0
    else:
        r[:, :d] = xi - dtc * v0
        r[:, d:] = xid - v0
    if not jacobians:
        return r, None, None

    I = np.broadcast_to(np.eye(d), (n, d, d))
    dt3 = dt[:, None, None]
    J0 = np.zeros((n, m * d, m * d))
    J1 = np.zeros((n, m * d, m * d))
    if group.is_abelian:
        dxi0 = -I
        dxi1 = I
    else:
        dxi0 = -group.right_jacobian_inv(xi)
        dxi1 = Jinv
    adv1 = group.ad(v1)
    dxid0 = 0.5 * adv1 @ dxi0
    dxid1 = 0.5 * adv1 @ dxi1
    # rows: xi / xi_dot / xi_ddot ; cols: g / g_dot / g_ddot
    J0[:, :d, :d] = dxi0
    J0[:, :d, d:2 * d] = -dt3 * I
    J0[:, d:2 * d, :d] = dxid0
    J0[:, d:2 * d, d:2 * d] = -I
    J1[:, :d, :d] = dxi1
    J1[:, d:2 * d, :d] = dxid1
    J1[:, d:2 * d, d:2 * d] = Jinv
    if m == 3:
        J0[:, :d, 2 * d:] = -0.5 * dt3 ** 2 * I
        J0[:, d:2 * d, 2 * d:] = -dt3 * I
        J0[:, 2 * d:, 2 * d:] = -I
        ada1 = group.ad(a1)
        J0[:, 2 * d:, :d] = 0.5 * ada1 @ dxi0 + 0.5 * adv1 @ dxid0
        J1[:, 2 * d:, :d] = 0.5 * ada1 @ dxi1 + 0.5 * adv1 @ dxid1
        J1[:, 2 * d:, d:2 * d] = -0.5 * (group.ad(xid) - adv1 @ Jinv)
        J1[:, 2 * d:, 2 * d:] = Jinv
    return r, J0, J1


def _state_arrays(s: KinematicState, order: ModelOrder):
    acc = s.acc if s.acc is not None else np.zeros(s.group.dim)
    return s.g[None], s.vel[None], acc[None]


def _check_pair(s_j: KinematicState, s_j1: KinematicState):
    if s_j.group != s_j1.group:
        raise ValueError("states must live on the same group")
    return ModelOrder.WNOJ if s_j.acc is not None and s_j1.acc is not None else ModelOrder.WNOA


def lie_prior_residual(s_j: KinematicState, s_j1: KinematicState, dt: float) -> np.ndarray:
    """Residual of the local-variable WNOJ (or WNOA) model between two states."""
    order = _check_pair(s_j, s_j1)
    r, _, _ = lie_prior_batch(s_j.group, order, *_state_arrays(s_j, order),
                              *_state_arrays(s_j1, order), np.array([dt]), jacobians=False)
    return r[0]


def lie_prior_jacobians(s_j: KinematicState, s_j1: KinematicState, dt: float) -> dict:
    """Jacobians of :func:`lie_prior_residual` keyed by parameter name.

    Keys are ``g_j, vel_j, acc_j, g_j1, vel_j1, acc_j1`` (acceleration keys
    are absent for WNOA states).
    """
    order = _check_pair(s_j, s_j1)
    d = s_j.group.dim
    _, J0, J1 = lie_prior_batch(s_j.group, order, *_state_arrays(s_j, order),
                                *_state_arrays(s_j1, order), np.array([dt]))
    names = ["g", "vel", "acc"][:order.blocks]
    out = {}
    for i, name in enumerate(names):
        out[f"{name}_j"] = J0[0][:, i * d:(i + 1) * d]
        out[f"{name}_j1"] = J1[0][:, i * d:(i + 1) * d]
    return out


def prior_whitening(dt: float, order, Q, d: int) -> np.ndarray:
    """Square-root information of one prior factor with PSD ``Q`` (``d x d``)."""
    return process_information_sqrt(dt, order, _as_psd(Q, d))


__all__ = [
    "ModelOrder", "LinearSystem", "transition_matrix", "process_covariance",
    "process_information_sqrt", "whitening_from_covariance", "linear_prior_residual",
    "lie_prior_residual", "lie_prior_jacobians", "lie_prior_batch", "prior_whitening",
    "transition_scalar", "covariance_scalar",
]
