"""Trajectory error metrics, information-matrix bitmaps and query timing."""
from __future__ import annotations

import time

import numpy as np

from ..errors import OutOfDomain
from ..manifold import SE3, SO3, Euclidean, SO3xR3
from ..sim import GroundTruth, se3_to_product


def _body_quantities(group, g, vel):
    """Inertial position, rotation ``R_I^B``, pose ``T_I^B`` and twist ``[v; omega]``."""
    if isinstance(group, Euclidean):
        return g, None, None, vel
    if group == SE3:
        R = g[:, :3, :3]
        p = -np.einsum("nji,nj->ni", R, g[:, :3, 3])
        return p, R, g, -vel
    if group == SO3xR3:
        R = g[:, :3, :3]
        p = g[:, :3, 3]
        T = np.zeros_like(g)
        T[:, :3, :3] = R
        T[:, :3, 3] = -np.einsum("nij,nj->ni", R, p)
        T[:, 3, 3] = 1.0
        v = np.einsum("nij,nj->ni", R, vel[:, :3])
        return p, R, T, np.concatenate([v, -vel[:, 3:]], 1)
    raise TypeError(f"unsupported group {group}")


def _rms(x):
    return float(np.sqrt(np.mean(x ** 2))) if x.size else float("nan")


def rmse(truth: GroundTruth, traj, grid_rate: float = 1000.0) -> dict:
    """RMSE of position, rotation (geodesic angle), pose, velocity and twist.

    The estimate is sampled on a uniform grid at ``grid_rate`` over the part
    of the truth that the trajectory domain covers.
    """
    lo, hi = traj.domain
    step = max(1, int(round(truth.rate / grid_rate)))
    times = truth.times[::step]
    keep = (times >= lo - 1e-12) & (times <= hi + 1e-12)
    if not np.any(keep):
        raise OutOfDomain("trajectory does not overlap the ground truth")
    times = times[keep]
    idx = truth.index(times)
    est = traj.sample(times)
    p_e, R_e, T_e, tw_e = _body_quantities(traj.group, est.g, est.vel)
    p_t, R_t, T_t, tw_t = _body_quantities(truth.group, truth.g[idx], truth.vel[idx])
    out = {"position_rmse": _rms(np.linalg.norm(p_e - p_t, axis=1))}
    d = p_e.shape[1]
    if R_e is None:
        out["velocity_rmse"] = _rms(np.linalg.norm(tw_e - tw_t, axis=1))
        for key in ("rotation_rmse", "pose_rmse", "twist_rmse", "angular_rmse"):
            out[key] = float("nan")
        return out
    out["rotation_rmse"] = _rms(np.linalg.norm(SO3.log(R_e @ np.swapaxes(R_t, 1, 2)), axis=1))
    out["pose_rmse"] = _rms(np.linalg.norm(SE3.log(T_e @ SE3.inverse(T_t)), axis=1))
    err = tw_e - tw_t
    out["velocity_rmse"] = _rms(np.linalg.norm(err[:, :d], axis=1))
    out["angular_rmse"] = _rms(np.linalg.norm(err[:, d:], axis=1))
    out["twist_rmse"] = _rms(np.linalg.norm(err, axis=1))
    return out


def dump_sparsity(problem) -> str:
    """Block pattern of the information matrix, one ``#``/``.`` per block."""
    if not problem.factors:
        return ""
    pattern = problem.info_pattern()
    return "\n".join("".join("#" if x else "." for x in row) for row in pattern)


def block_bandwidth(pattern: np.ndarray) -> int:
    i, j = np.nonzero(pattern)
    return int(np.max(np.abs(i - j))) if i.size else 0


def query_throughput(traj, rate: float, duration: float = None) -> float:
    """Samples per second when querying pose and twist on a uniform grid.

    With ``duration`` the grid is ``lo + i / rate`` for ``i < duration * rate``
    (so 10 s at 1 kHz is 10,000 samples), clipped to the trajectory domain;
    without it the whole closed domain is sampled.
    """
    if not rate > 0:
        raise ValueError("query rate must be positive")
    lo, hi = traj.domain
    if duration is None:
        n = int(np.floor((hi - lo) * rate + 1e-9)) + 1
    else:
        n = int(round(duration * rate))
    times = lo + np.arange(n) / rate
    times = times[times <= hi + 1e-12]
    start = time.perf_counter()
    traj.sample(times)
    elapsed = time.perf_counter() - start
    return times.size / max(elapsed, 1e-12)


__all__ = ["rmse", "dump_sparsity", "block_bandwidth", "query_throughput", "se3_to_product"]
