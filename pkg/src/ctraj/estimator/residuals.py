"""Single-measurement residual helpers built on the factor batches.

Each returns ``(r, jacobians)`` where ``r`` is the whitened residual and
``jacobians`` maps a parameter key to its Jacobian block: trajectory blocks
are keyed by their integer index and biases by ``"gyro"``/``"accel"``.
"""
from __future__ import annotations

import numpy as np

from .factors import GRAVITY, AccelFactors, Context, FiducialFactors, GyroFactors, PositionFactors


def _single(batch, traj, biases=None):
    biases = biases or {"gyro": np.zeros(3), "accel": np.zeros(3)}
    P = traj.block_dim
    nt = traj.num_blocks * P
    bias_cols = {}
    if batch.uses_bias:
        bias_cols[batch.uses_bias] = nt + np.arange(3)
    r, pieces = batch.evaluate(Context(traj, biases, bias_cols), True)
    jac: dict = {}
    for cols, J in pieces:
        for c in range(cols.shape[1]):
            col = int(cols[0, c])
            key = batch.uses_bias if col >= nt else col // P
            width = 3 if col >= nt else P
            base = nt if col >= nt else (col // P) * P
            blk = jac.setdefault(key, np.zeros((r.shape[1], width)))
            blk[:, col - base] += J[0, :, c]
    return r[0], jac


def position_residual(z, t, traj, cov):
    return _single(PositionFactors([t], [z], cov), traj)


def gyro_residual(z, t, traj, b_g, cov):
    return _single(GyroFactors([t], [z], cov), traj, {"gyro": np.asarray(b_g, float), "accel": np.zeros(3)})


def accel_residual(z, t, traj, b_a, cov, gravity: float = GRAVITY):
    return _single(AccelFactors([t], [z], cov, gravity), traj,
                   {"gyro": np.zeros(3), "accel": np.asarray(b_a, float)})


def fiducial_residual(z, t, traj, T_B_C, T_I_F, Sigma_c):
    return _single(FiducialFactors([t], [z], Sigma_c, T_B_C, T_I_F), traj)
