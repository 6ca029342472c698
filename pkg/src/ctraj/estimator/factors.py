"""Vectorised factor batches: whitened residuals and their Jacobians.

Each batch evaluates all of its factors at once and returns the residual
rows ``(n, r)`` plus a list of ``(cols, J)`` pieces, where ``cols`` has shape
``(n, C)`` (global column indices) and ``J`` has shape ``(n, r, C)``.
Residuals follow ``L (z - h(x))``, so Jacobians are ``-L dh/dx``.
"""
from __future__ import annotations

import warnings
from typing import Optional

import numpy as np

from ..gp import GpTrajectory
from ..manifold import SE3, SO3xR3, LieGroup, skew
from ..motion_model import ModelOrder, lie_prior_batch, process_information_sqrt, whitening_from_covariance
from ..spline import SplineTrajectory

GRAVITY = 9.81
E3 = np.array([0.0, 0.0, 1.0])


def _mv(M, v):
    return np.einsum("...ij,...j->...i", M, v)


def sqrt_info(cov, n: int, dim: int) -> np.ndarray:
    """Whitening matrices for ``n`` factors from a shared or per-factor covariance."""
    cov = np.asarray(cov, dtype=float)
    if cov.ndim == 0:
        cov = cov * np.eye(dim)
    if cov.ndim == 2:
        return np.broadcast_to(whitening_from_covariance(cov), (n, dim, dim))
    return np.stack([whitening_from_covariance(c) for c in cov])


def traj_cols(idx: np.ndarray, P: int) -> np.ndarray:
    return (idx[..., None] * P + np.arange(P)).reshape(idx.shape[0], -1)


def pose_from_group(group: LieGroup, g: np.ndarray):
    """Pose ``T_I^B`` and the map from group perturbations to SE(3) left perturbations."""
    n = g.shape[0]
    if group == SE3:
        return g, np.broadcast_to(np.eye(6), (n, 6, 6))
    if group == SO3xR3:
        R = g[:, :3, :3]
        T = np.zeros((n, 4, 4))
        T[:, :3, :3] = R
        T[:, :3, 3] = -_mv(R, g[:, :3, 3])
        T[:, 3, 3] = 1.0
        D = np.zeros((n, 6, 6))
        D[:, :3, :3] = -R
        D[:, 3:, 3:] = np.eye(3)
        return T, D
    raise TypeError(f"pose measurements need SE3 or SO3xR3, got {group}")


class Context:
    """What a factor batch sees while evaluating: the trajectory and biases."""

    def __init__(self, traj, biases: dict, bias_cols: dict):
        self.traj = traj
        self.biases = biases
        self.bias_cols = bias_cols


class FactorBatch:
    uses_bias: Optional[str] = None

    def __init__(self, kind: str, stamps: np.ndarray):
        self.kind = kind
        self.stamps = stamps

    @property
    def size(self) -> int:
        return len(self.stamps)

    @property
    def rdim(self) -> int:
        raise NotImplementedError

    def evaluate(self, ctx: Context, jacobians: bool = True):
        raise NotImplementedError


# ---------------------------------------------------------------------------
# measurement factors
# ---------------------------------------------------------------------------

class PositionFactors(FactorBatch):
    """``z = d(t) + eta`` on a Euclidean trajectory."""

    def __init__(self, stamps, z, cov):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        super().__init__("Position", np.asarray(stamps, dtype=float))
        self.z = z
        self.L = sqrt_info(cov, len(self.stamps), z.shape[1])

    @property
    def rdim(self) -> int:
        return self.z.shape[1]

    def evaluate(self, ctx, jacobians=True):
        traj = ctx.traj
        d = traj.group.dim
        s = traj.sample(self.stamps, jacobians)
        r = _mv(self.L, self.z - s.g)
        if not jacobians:
            return r, []
        J = -self.L @ s.jac[:, :d].reshape(len(s), d, -1)
        return r, [(traj_cols(s.idx, traj.block_dim), J)]


class GyroFactors(FactorBatch):
    """``z = omega(t) + b_g + eta`` with ``omega = -g_dot_rot``."""

    uses_bias = "gyro"

    def __init__(self, stamps, z, cov):
        super().__init__("Gyro", np.asarray(stamps, dtype=float))
        self.z = np.atleast_2d(np.asarray(z, dtype=float))
        self.L = sqrt_info(cov, len(self.stamps), 3)

    @property
    def rdim(self) -> int:
        return 3

    def evaluate(self, ctx, jacobians=True):
        traj = ctx.traj
        d = traj.group.dim
        s = traj.sample(self.stamps, jacobians)
        omega = -s.vel[:, 3:6]
        b = ctx.biases["gyro"]
        r = _mv(self.L, self.z - omega - b)
        if not jacobians:
            return r, []
        n = len(s)
        dh = -s.jac[:, d + 3:d + 6].reshape(n, 3, -1)
        pieces = [(traj_cols(s.idx, traj.block_dim), -self.L @ dh)]
        if "gyro" in ctx.bias_cols:
            pieces.append((np.broadcast_to(ctx.bias_cols["gyro"], (n, 3)), -np.asarray(self.L)))
        return r, pieces


def specific_force(group: LieGroup, s, gravity: float, jacobians: bool):
    """Accelerometer model ``a - g R e3`` and its Jacobian w.r.t. sampled parameters."""
    d = group.dim
    n = len(s)
    R = s.g[:, :3, :3]
    Re3 = R[:, :, 2]
    jac = None if s.jac is None else s.jac.reshape(n, 3 * d, -1)
    if group == SE3:
        f = -s.acc[:, :3] - gravity * Re3
        if not jacobians:
            return f, None
        df = -jac[:, 2 * d:2 * d + 3] + gravity * skew(Re3) @ jac[:, 3:6]
        return f, df
    if group == SO3xR3:
        pd, wr, pdd = s.vel[:, :3], s.vel[:, 3:], s.acc[:, :3]
        v = _mv(R, pd)
        Rpdd = _mv(R, pdd)
        f = Rpdd + np.cross(wr, v) - gravity * Re3
        if not jacobians:
            return f, None
        W = skew(wr)
        df = ((-skew(Rpdd) - W @ skew(v) + gravity * skew(Re3)) @ jac[:, 3:6]
              + (W @ R) @ jac[:, d:d + 3]
              - skew(v) @ jac[:, d + 3:d + 6]
              + R @ jac[:, 2 * d:2 * d + 3])
        return f, df
    raise TypeError(f"accelerometer factors need SE3 or SO3xR3, got {group}")


class AccelFactors(FactorBatch):
    """``z = a(t) - g R e3 + b_a + eta``."""

    uses_bias = "accel"

    def __init__(self, stamps, z, cov, gravity: float = GRAVITY):
        super().__init__("Accel", np.asarray(stamps, dtype=float))
        self.z = np.atleast_2d(np.asarray(z, dtype=float))
        self.L = sqrt_info(cov, len(self.stamps), 3)
        self.gravity = gravity

    @property
    def rdim(self) -> int:
        return 3

    def evaluate(self, ctx, jacobians=True):
        traj = ctx.traj
        s = traj.sample(self.stamps, jacobians)
        f, df = specific_force(traj.group, s, self.gravity, jacobians)
        r = _mv(self.L, self.z - f - ctx.biases["accel"])
        if not jacobians:
            return r, []
        n = len(s)
        pieces = [(traj_cols(s.idx, traj.block_dim), -self.L @ df)]
        if "accel" in ctx.bias_cols:
            pieces.append((np.broadcast_to(ctx.bias_cols["accel"], (n, 3)), -np.asarray(self.L)))
        return r, pieces


class FiducialFactors(FactorBatch):
    """``z = Exp(eta) T_B^C T_I^B(t) T_I^F^-1`` with residual ``L Log(z h^-1)``."""

    def __init__(self, stamps, z, cov, T_B_C, T_I_F):
        super().__init__("FiducialPose", np.asarray(stamps, dtype=float))
        n = len(self.stamps)
        self.z = np.asarray(z, dtype=float).reshape(n, 4, 4)
        self.L = sqrt_info(cov, n, 6)
        self.T_B_C = np.asarray(T_B_C, dtype=float)
        T_I_F = np.asarray(T_I_F, dtype=float)
        self.T_F_I = SE3.inverse(np.broadcast_to(T_I_F, (n, 4, 4)))
        self.Ad_BC = SE3.adjoint(self.T_B_C)

    @property
    def rdim(self) -> int:
        return 6

    def predict(self, traj) -> np.ndarray:
        s = traj.sample(self.stamps)
        T, _ = pose_from_group(traj.group, s.g)
        return self.T_B_C @ T @ self.T_F_I

    def evaluate(self, ctx, jacobians=True):
        traj = ctx.traj
        s = traj.sample(self.stamps, jacobians)
        T, D = pose_from_group(traj.group, s.g)
        h = self.T_B_C @ T @ self.T_F_I
        e = SE3.log(self.z @ SE3.inverse(h))
        r = _mv(self.L, e)
        if not jacobians:
            return r, []
        n = len(s)
        dh = self.Ad_BC @ D @ s.jac[:, :6].reshape(n, 6, -1)
        J = -self.L @ SE3.right_jacobian_inv(e) @ dh
        return r, [(traj_cols(s.idx, traj.block_dim), J)]


# ---------------------------------------------------------------------------
# motion priors
# ---------------------------------------------------------------------------

class GpPriorFactors(FactorBatch):
    """One prior between every pair of consecutive estimation states."""

    def __init__(self, traj: GpTrajectory, Q):
        super().__init__("MotionPrior", np.asarray(traj.times[1:], dtype=float))
        self.order = traj.order
        d = traj.group.dim
        dts = np.diff(traj.times)
        self.dts = dts
        self.L = np.stack([process_information_sqrt(dt, self.order, _psd(Q, d)) for dt in dts])

    @property
    def rdim(self) -> int:
        return self.L.shape[1]

    def evaluate(self, ctx, jacobians=True):
        traj: GpTrajectory = ctx.traj
        m = self.order.blocks
        acc = traj.acc if m == 3 else np.zeros_like(traj.vel)
        r, J0, J1 = lie_prior_batch(traj.group, self.order, traj.g[:-1], traj.vel[:-1], acc[:-1],
                                    traj.g[1:], traj.vel[1:], acc[1:], self.dts, jacobians)
        r = _mv(self.L, r)
        if not jacobians:
            return r, []
        n = self.dts.size
        P = traj.block_dim
        blocks = np.arange(n)
        c0 = blocks[:, None] * P + np.arange(P)
        return r, [(c0, self.L @ J0), (c0 + P, self.L @ J1)]


class SplinePriorFactors(FactorBatch):
    """Priors between interpolated states sampled every ``period`` seconds.

    Samples start at the beginning of the domain; when the span is not a
    multiple of ``period`` a last, shorter interval closes it so the tail of
    the trajectory is constrained too.
    """

    def __init__(self, traj: SplineTrajectory, period: float, Q, order=ModelOrder.WNOJ):
        lo, hi = traj.domain
        count = int(np.floor((hi - lo) / period + 1e-9))
        if count < 1:
            warnings.warn("motion-prior period exceeds the trajectory span; no priors added", stacklevel=3)
        t = lo + period * np.arange(count + 1)
        if count >= 1 and hi - t[-1] > 1e-9 * period:
            t = np.append(t, hi)
        super().__init__("MotionPrior", t[1:])
        self.t0 = t[:-1]
        self.t1 = t[1:]
        self.period = float(period)
        self.dt = self.t1 - self.t0
        self.order = ModelOrder(order) if not isinstance(order, ModelOrder) else order
        d = traj.group.dim
        Qc = _psd(Q, d)
        width = self.order.blocks * d
        self.L = np.empty((self.size, width, width))
        if self.size:
            self.L[:] = process_information_sqrt(period, self.order, Qc)
            if not np.isclose(self.dt[-1], period, rtol=0, atol=1e-9 * period):
                self.L[-1] = process_information_sqrt(self.dt[-1], self.order, Qc)

    @property
    def rdim(self) -> int:
        return self.L.shape[1]

    def evaluate(self, ctx, jacobians=True):
        traj: SplineTrajectory = ctx.traj
        d, m = traj.group.dim, self.order.blocks
        if self.size == 0:
            return np.zeros((0, m * d)), []
        a = traj.sample(self.t0, jacobians)
        b = traj.sample(self.t1, jacobians)
        r, J0, J1 = lie_prior_batch(traj.group, self.order, a.g, a.vel, a.acc, b.g, b.vel, b.acc,
                                    self.dt, jacobians)
        r = _mv(self.L, r)
        if not jacobians:
            return r, []
        n, P = self.size, traj.block_dim
        ja = a.jac.reshape(n, 3 * d, -1)[:, :m * d]
        jb = b.jac.reshape(n, 3 * d, -1)[:, :m * d]
        return r, [(traj_cols(a.idx, P), self.L @ J0 @ ja), (traj_cols(b.idx, P), self.L @ J1 @ jb)]


def _psd(Q, d):
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if Q.shape == (1, 1) and d > 1:
        Q = Q[0, 0] * np.eye(d)
    return Q
