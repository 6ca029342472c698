"""Build and solve one estimation problem for a grid cell."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..estimator import Problem, SolveConfig, SolveReport
from ..gp import GpTrajectory
from ..manifold import SE3, Euclidean, LieGroup, SO3xR3
from ..motion_model import ModelOrder
from ..sim import GroundTruth, MeasurementSet, Scenario, SimConfig, sinusoid_state
from ..spline import SplineTrajectory

REPRESENTATIONS = ("GP-SE3", "GP-SO3xR3", "Spline-SE3", "Spline-SO3xR3", "GP-Euclid", "Spline-Euclid")
REGULARIZATIONS = ("none", "MP", "IMU", "MP+IMU")


@dataclass(frozen=True)
class Cell:
    representation: str
    regularization: str = "MP"
    k: int = 4
    knot_period: float = 0.1
    gp_stride: int = 1
    #: knot period over motion-prior period (splines only)
    prior_ratio: float = 1.0 / 3.0

    def __post_init__(self):
        if self.representation not in REPRESENTATIONS:
            raise ValueError(f"unknown representation {self.representation!r}")
        if self.regularization not in REGULARIZATIONS:
            raise ValueError(f"unknown regularization {self.regularization!r}")

    @property
    def is_gp(self) -> bool:
        return self.representation.startswith("GP")

    @property
    def uses_priors(self) -> bool:
        return "MP" in self.regularization

    @property
    def uses_imu(self) -> bool:
        return "IMU" in self.regularization

    def group(self, d: int = 2) -> LieGroup:
        tail = self.representation.split("-", 1)[1]
        return {"SE3": SE3, "SO3xR3": SO3xR3}.get(tail) or Euclidean(d)

    def describe(self) -> dict:
        return {
            "representation": self.representation, "regularization": self.regularization,
            "k": "" if self.is_gp else self.k,
            "knot_period": "" if self.is_gp else self.knot_period,
            "gp_stride": self.gp_stride if self.is_gp else "",
            "prior_ratio": "" if (self.is_gp or not self.uses_priors) else self.prior_ratio,
        }


def truth_state(truth: GroundTruth, cfg: SimConfig, group: LieGroup, times) -> tuple:
    """Truth ``(g, g_dot, g_ddot)`` on ``group`` at arbitrary times.

    Sinusoids are evaluated analytically; sampled truths use the nearest grid
    sample and extrapolate along its geodesic (exact for constant twists).
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if cfg.scenario in (Scenario.LinearSinusoid, Scenario.Se3Sinusoid):
        src, g, v, a = sinusoid_state(times, cfg)
        tmp = GroundTruth(times, src, g, v, a)
        return tmp.as_group(group)
    g_all, v_all, a_all = truth.as_group(group)
    idx = np.clip(np.rint((times - truth.times[0]) * truth.rate).astype(int), 0, truth.times.size - 1)
    dt = (times - truth.times[idx])[:, None]
    g = group.compose(group.exp(dt * v_all[idx]), g_all[idx])
    return g, v_all[idx] + dt * a_all[idx], a_all[idx].copy()


def build_trajectory(cell: Cell, truth: GroundTruth, meas: MeasurementSet, cfg: SimConfig,
                     prior_Q: np.ndarray, init: str = "identity"):
    linear = cfg.scenario.is_linear
    group = cell.group(d=truth.group.dim if linear else 6)
    if linear != isinstance(group, Euclidean):
        raise ValueError(f"{cell.representation} does not fit scenario {cfg.scenario.value}")
    t0, t1 = 0.0, cfg.duration
    if cell.is_gp:
        stamps = meas["position"].stamps if linear else np.unique(meas["fiducial"].stamps)
        times = stamps[::cell.gp_stride]
        if times[-1] < t1 - 1e-12:
            times = np.append(times, t1)
        if times[0] > t0 + 1e-12:
            times = np.insert(times, 0, t0)
        traj = GpTrajectory.identity(group, times, prior_Q, ModelOrder.WNOJ)
        if init == "truth":
            g, v, a = truth_state(truth, cfg, group, times)
            traj = GpTrajectory(group, ModelOrder.WNOJ, times, g, v, a, prior_Q)
        return traj
    traj = SplineTrajectory.covering(group, cell.k, t0, t1, cell.knot_period)
    if init == "truth":
        g, _, _ = truth_state(truth, cfg, group, traj.greville())
        traj = SplineTrajectory(group, cell.k, traj.knot_start, traj.knot_period, g)
    return traj


def build_problem(cell: Cell, truth: GroundTruth, meas: MeasurementSet, cfg: SimConfig,
                  prior_Q: Optional[np.ndarray] = None, init: str = "identity") -> Problem:
    prior_Q = cfg.Q if prior_Q is None else np.atleast_2d(prior_Q)
    traj = build_trajectory(cell, truth, meas, cfg, prior_Q, init)
    prob = Problem(traj, gravity=cfg.gravity)
    if cfg.scenario.is_linear:
        m = meas["position"]
        prob.add_position_factors(m.stamps, m.values, m.covs)
    else:
        m = meas["fiducial"]
        T_I_F = np.stack([cfg.tags[i] for i in m.tag_ids]) if len(m) else np.eye(4)
        prob.add_fiducial_factors(m.stamps, m.values, m.covs, cfg.T_B_C, T_I_F)
        if cell.uses_imu:
            g, a = meas["gyro"], meas["accel"]
            prob.add_gyro_factors(g.stamps, g.values, g.covs)
            prob.add_accel_factors(a.stamps, a.values, a.covs)
    if cell.uses_priors:
        if cell.is_gp:
            prob.add_motion_priors(prior_Q)
        else:
            prob.add_motion_priors(prior_Q, period=cell.knot_period / cell.prior_ratio)
    return prob


def default_solver(cfg: SimConfig, cell: Cell) -> SolveConfig:
    """LM without the rank check; SE(3) problems also solve in two stages."""
    if cfg.scenario.is_linear:
        return SolveConfig(rank_check=False)
    return SolveConfig(two_stage=True, rank_check=False)


def solve_cell(cell: Cell, truth: GroundTruth, meas: MeasurementSet, cfg: SimConfig,
               prior_Q=None, solver: Optional[SolveConfig] = None, init: str = "identity"):
    prob = build_problem(cell, truth, meas, cfg, prior_Q, init)
    report: SolveReport = prob.solve(solver or default_solver(cfg, cell))
    return prob, report
