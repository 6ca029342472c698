"""Least-squares problem over a trajectory plus constant IMU biases, and its LM solver."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from ..errors import RankDeficient
from ..gp import GpTrajectory
from ..motion_model import ModelOrder
from ..spline import SplineTrajectory
from .factors import (AccelFactors, Context, FactorBatch, FiducialFactors, GpPriorFactors, GyroFactors,
                      PositionFactors, SplinePriorFactors, GRAVITY)
from .linalg import BandedSolver

MEASUREMENT_KINDS = ("Position", "FiducialPose")
IMU_KINDS = ("Gyro", "Accel")


@dataclass
class SolveConfig:
    max_iters: int = 100
    lm_lambda0: float = 1e-4
    lambda_scale: float = 10.0
    cost_tol: float = 1e-8
    grad_tol: float = 1e-10
    #: stop as soon as the cost is at or below this absolute value
    cost_floor: float = 1e-16
    lambda_max: float = 1e16
    two_stage: bool = False
    #: raise RankDeficient when the undamped normal equations are singular
    rank_check: bool = True
    rank_rtol: float = 1e-12


@dataclass
class SolveReport:
    iterations: int = 0
    initial_cost: float = float("nan")
    final_cost: float = float("nan")
    costs: list = field(default_factory=list)
    residual_jacobian_seconds: float = 0.0
    linear_solve_seconds: float = 0.0
    total_seconds: float = 0.0
    termination: str = ""
    gradient_norm: float = float("nan")
    stages: list = field(default_factory=list)

    @property
    def success(self) -> bool:
        return self.termination not in ("max_iterations", "rank_deficient", "lambda_max")

    def merge(self, other: "SolveReport") -> None:
        """Fold a later stage into this report."""
        if not self.costs:
            self.initial_cost = other.initial_cost
        self.iterations += other.iterations
        self.final_cost = other.final_cost
        self.costs += other.costs
        self.residual_jacobian_seconds += other.residual_jacobian_seconds
        self.linear_solve_seconds += other.linear_solve_seconds
        self.total_seconds += other.total_seconds
        self.termination = other.termination
        self.gradient_norm = other.gradient_norm
        self.stages.append(other)


class Problem:
    """Factor graph ``sum ||L r||^2`` over a GP or spline trajectory.

    Bias blocks ``b_g`` and ``b_a`` are constant 3-vectors and only become
    parameters once gyro or accelerometer factors are present.
    """

    def __init__(self, traj, gravity: float = GRAVITY):
        self.traj = traj
        self.gravity = gravity
        self.factors: list[FactorBatch] = []
        self.biases = {"gyro": np.zeros(3), "accel": np.zeros(3)}
        self.prior_period: Optional[float] = None

    # -- building ----------------------------------------------------------
    def _add(self, batch: FactorBatch) -> FactorBatch:
        if batch.size:
            self.traj.sample(batch.stamps[[0, -1]])  # raises when outside the domain
        self.factors.append(batch)
        return batch

    def add_position_factors(self, stamps, z, cov):
        return self._add(PositionFactors(stamps, z, cov))

    def add_gyro_factors(self, stamps, z, cov):
        return self._add(GyroFactors(stamps, z, cov))

    def add_accel_factors(self, stamps, z, cov):
        return self._add(AccelFactors(stamps, z, cov, self.gravity))

    def add_fiducial_factors(self, stamps, z, cov, T_B_C, T_I_F):
        return self._add(FiducialFactors(stamps, z, cov, T_B_C, T_I_F))

    def add_motion_priors(self, Q, period: Optional[float] = None, order=None):
        """GP: one prior per consecutive pair of states. Spline: priors every ``period`` s."""
        if isinstance(self.traj, GpTrajectory):
            batch = GpPriorFactors(self.traj, Q)
        elif isinstance(self.traj, SplineTrajectory):
            if period is None or period <= 0:
                raise ValueError("spline motion priors need a positive sample period")
            batch = SplinePriorFactors(self.traj, period, Q, order or ModelOrder.WNOJ)
            self.prior_period = period
        else:
            raise TypeError("unsupported trajectory type")
        self.factors.append(batch)
        return batch

    # -- layout ------------------------------------------------------------
    @property
    def n_traj_cols(self) -> int:
        return self.traj.num_blocks * self.traj.block_dim

    def _active_biases(self, factors) -> list[str]:
        names = []
        for f in factors:
            if f.uses_bias and f.size and f.uses_bias not in names:
                names.append(f.uses_bias)
        return sorted(names, key=["gyro", "accel"].index)

    def _layout(self, factors):
        biases = self._active_biases(factors)
        base = self.n_traj_cols
        cols = {name: base + 3 * i + np.arange(3) for i, name in enumerate(biases)}
        return cols, base + 3 * len(biases)

    # -- evaluation ----------------------------------------------------------
    def evaluate(self, factors=None, jacobians: bool = True, traj=None, biases=None):
        """Stacked whitened residual and (optionally) the sparse Jacobian."""
        factors = self.factors if factors is None else factors
        traj = self.traj if traj is None else traj
        biases = self.biases if biases is None else biases
        bias_cols, ncols = self._layout(factors)
        ctx = Context(traj, biases, bias_cols)
        res, rows, cols, data = [], [], [], []
        offset = 0
        for f in factors:
            if f.size == 0:
                continue
            r, pieces = f.evaluate(ctx, jacobians)
            n, rd = r.shape
            res.append(r.reshape(-1))
            if jacobians:
                ridx = offset + np.arange(n * rd).reshape(n, rd)
                for c, J in pieces:
                    C = c.shape[1]
                    rows.append(np.broadcast_to(ridx[:, :, None], (n, rd, C)).reshape(-1))
                    cols.append(np.broadcast_to(c[:, None, :], (n, rd, C)).reshape(-1))
                    data.append(np.asarray(J).reshape(-1))
            offset += n * rd
        r = np.concatenate(res) if res else np.zeros(0)
        if not jacobians:
            return r, None
        if rows:
            J = sp.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(offset, ncols))
        else:
            J = sp.csr_matrix((0, ncols))
        return r, J

    def cost(self, factors=None) -> float:
        r, _ = self.evaluate(factors, jacobians=False)
        return float(r @ r)

    def _retract(self, delta, factors):
        bias_cols, _ = self._layout(factors)
        nt = self.n_traj_cols
        traj = self.traj.retract(delta[:nt])
        biases = dict(self.biases)
        for name, c in bias_cols.items():
            biases[name] = biases[name] + delta[c]
        return traj, biases

    # -- structure -----------------------------------------------------------
    def block_of_columns(self, factors=None) -> np.ndarray:
        factors = self.factors if factors is None else factors
        bias_cols, ncols = self._layout(factors)
        P = self.traj.block_dim
        out = np.empty(ncols, dtype=int)
        out[: self.n_traj_cols] = np.arange(self.n_traj_cols) // P
        for i, c in enumerate(bias_cols.values()):
            out[c] = self.traj.num_blocks + i
        return out

    def info_pattern(self, factors=None) -> np.ndarray:
        """Boolean block pattern of the information matrix ``J^T J``."""
        factors = self.factors if factors is None else factors
        _, J = self.evaluate(factors)
        blocks = self.block_of_columns(factors)
        nb = int(blocks.max()) + 1 if blocks.size else 0
        if J.shape[0] == 0 or nb == 0:
            return np.zeros((nb, nb), dtype=bool)
        M = sp.csr_matrix((np.ones(blocks.size), (np.arange(blocks.size), blocks)), shape=(blocks.size, nb))
        JB = (abs(J) @ M)
        JB.data[:] = 1.0
        H = (JB.T @ JB).toarray()
        return H > 0

    # -- solving -------------------------------------------------------------
    def solve(self, config: Optional[SolveConfig] = None) -> SolveReport:
        config = config or SolveConfig()
        if not config.two_stage:
            return self._solve_factors(self.factors, config)
        stage1 = [f for f in self.factors if f.kind in MEASUREMENT_KINDS]
        report = SolveReport()
        s1 = self._solve_factors(stage1, SolveConfig(**{**config.__dict__, "rank_check": False}))
        report.merge(s1)
        s2 = self._solve_factors(self.factors, config)
        report.merge(s2)
        return report

    def _solve_factors(self, factors, config: SolveConfig) -> SolveReport:
        rep = SolveReport()
        t_start = time.perf_counter()
        _, ncols = self._layout(factors)
        n_border = ncols - self.n_traj_cols

        t0 = time.perf_counter()
        r, J = self.evaluate(factors)
        rep.residual_jacobian_seconds += time.perf_counter() - t0
        cost = float(r @ r)
        rep.initial_cost = cost
        rep.costs.append(cost)

        def factorise(J):
            t = time.perf_counter()
            H = (J.T @ J).tocsc()
            solver = BandedSolver(H, n_border)
            rep.linear_solve_seconds += time.perf_counter() - t
            return solver

        solver = factorise(J)
        if config.rank_check:
            t = time.perf_counter()
            try:
                solver.check_rank(config.rank_rtol)
            finally:
                rep.linear_solve_seconds += time.perf_counter() - t

        lam = config.lm_lambda0
        grad = J.T @ r
        termination = "max_iterations"
        for _ in range(config.max_iters):
            gnorm = float(np.max(np.abs(grad))) if grad.size else 0.0
            rep.gradient_norm = gnorm
            if cost <= config.cost_floor:
                termination = "cost_floor"
                break
            if gnorm <= config.grad_tol:
                termination = "gradient_tol"
                break
            t = time.perf_counter()
            try:
                delta = solver.solve(-grad, lam)
            except RankDeficient:
                delta = None
            rep.linear_solve_seconds += time.perf_counter() - t
            if delta is None:
                lam = max(lam * config.lambda_scale, config.lm_lambda0 or 1e-4)
                if lam > config.lambda_max:
                    termination = "rank_deficient"
                    break
                continue
            t = time.perf_counter()
            traj_new, biases_new = self._retract(delta, factors)
            r_new, _ = self.evaluate(factors, jacobians=False, traj=traj_new, biases=biases_new)
            rep.residual_jacobian_seconds += time.perf_counter() - t
            cost_new = float(r_new @ r_new)
            if cost_new <= cost:
                self.traj, self.biases = traj_new, biases_new
                rel = (cost - cost_new) / cost if cost > 0 else 0.0
                cost = cost_new
                rep.costs.append(cost)
                rep.iterations += 1
                lam = lam / config.lambda_scale
                t = time.perf_counter()
                r, J = self.evaluate(factors)
                rep.residual_jacobian_seconds += time.perf_counter() - t
                grad = J.T @ r
                solver = factorise(J)
                if rel < config.cost_tol:
                    termination = "cost_tol"
                    rep.gradient_norm = float(np.max(np.abs(grad))) if grad.size else 0.0
                    break
            else:
                lam = max(lam * config.lambda_scale, 1e-4 if lam == 0 else 0.0)
                if lam > config.lambda_max:
                    termination = "lambda_max"
                    break
        rep.final_cost = cost
        rep.termination = termination
        rep.total_seconds = time.perf_counter() - t_start
        return rep

    # -- convenience ---------------------------------------------------------
    def factor_counts(self) -> dict:
        out: dict = {}
        for f in self.factors:
            out[f.kind] = out.get(f.kind, 0) + f.size
        return out


def solve(problem: Problem, config: Optional[SolveConfig] = None) -> SolveReport:
    return problem.solve(config)


def info_pattern(problem: Problem) -> np.ndarray:
    return problem.info_pattern()
