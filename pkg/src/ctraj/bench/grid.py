"""Monte-Carlo grids over representation, order, density and regularization."""
from __future__ import annotations

import copy
import csv
import itertools
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from ..errors import CtrajError
from ..sim import Scenario, SimConfig, simulate
from .metrics import query_throughput, rmse
from .pipeline import REGULARIZATIONS, REPRESENTATIONS, Cell, default_solver, solve_cell

METRIC_FIELDS = ("position_rmse", "rotation_rmse", "pose_rmse", "velocity_rmse", "twist_rmse", "angular_rmse",
                 "solve_seconds", "residual_jacobian_seconds", "linear_solve_seconds", "iterations",
                 "param_floats", "query_rate")

ROTATION_METRIC_NOTE = "rotation_rmse is the geodesic angle ||Log(R_est R_true^T)|| in rad"


@dataclass
class MetricsRow:
    scenario: str
    representation: str
    regularization: str
    k: object
    knot_period: object
    gp_stride: object
    prior_ratio: object
    trial: object
    seed: object
    aggregate: str = "trial"
    position_rmse: float = float("nan")
    rotation_rmse: float = float("nan")
    pose_rmse: float = float("nan")
    velocity_rmse: float = float("nan")
    twist_rmse: float = float("nan")
    angular_rmse: float = float("nan")
    solve_seconds: float = float("nan")
    residual_jacobian_seconds: float = float("nan")
    linear_solve_seconds: float = float("nan")
    iterations: float = float("nan")
    param_floats: float = float("nan")
    query_rate: float = float("nan")
    termination: str = ""
    final_cost: float = float("nan")

    @classmethod
    def header(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @property
    def cell_key(self) -> tuple:
        return (self.scenario, self.representation, self.regularization, self.k, self.knot_period,
                self.gp_stride, self.prior_ratio)


@dataclass
class ExperimentGrid:
    scenario: Scenario = Scenario.LinearWNOJ
    representations: tuple = ("GP-Euclid", "Spline-Euclid")
    orders: tuple = (4,)
    knot_periods: tuple = (0.1,)
    gp_strides: tuple = (1,)
    regularizations: tuple = ("MP",)
    #: knot period over motion-prior period for spline cells with priors
    prior_ratios: tuple = (1.0 / 3.0,)
    trials: Optional[int] = None
    seed: int = 0
    sim_overrides: dict = field(default_factory=dict)
    #: diagonal of the motion-prior power spectral density; ``None`` uses the simulator's Q
    prior_q: Optional[tuple] = None
    solver_overrides: dict = field(default_factory=dict)
    metric_rate: float = 1000.0
    query_rate: float = 1000.0
    init: str = "identity"

    def __post_init__(self):
        self.scenario = Scenario(self.scenario)
        if self.trials is None:
            self.trials = 50 if self.scenario.is_linear else 20
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        for rep in self.representations:
            if rep not in REPRESENTATIONS:
                raise ValueError(f"unknown representation {rep!r}")
            if rep.endswith("Euclid") != self.scenario.is_linear:
                raise ValueError(f"{rep} is not valid for scenario {self.scenario.value}")
        for reg in self.regularizations:
            if reg not in REGULARIZATIONS:
                raise ValueError(f"unknown regularization {reg!r}")
            if "IMU" in reg and self.scenario.is_linear:
                raise ValueError("IMU regularization needs an SE(3) scenario")

    def cells(self) -> list[Cell]:
        out = []
        for rep, reg in itertools.product(self.representations, self.regularizations):
            if rep.startswith("GP"):
                out += [Cell(rep, reg, gp_stride=n) for n in self.gp_strides]
                continue
            ratios = self.prior_ratios if "MP" in reg else (1.0 / 3.0,)
            for k, dt, ratio in itertools.product(self.orders, self.knot_periods, ratios):
                out.append(Cell(rep, reg, k=k, knot_period=dt, prior_ratio=ratio))
        return out

    def sim_config(self, trial: int) -> SimConfig:
        return SimConfig.for_scenario(self.scenario, seed=self.seed + trial, **copy.deepcopy(self.sim_overrides))

    def prior_Q(self, cfg: SimConfig) -> np.ndarray:
        return cfg.Q if self.prior_q is None else np.diag(np.asarray(self.prior_q, dtype=float))


def _trial_rows(grid: ExperimentGrid, trial: int, cells: list[Cell]) -> list[MetricsRow]:
    """All cells for one trial share a single simulated data set."""
    cfg = grid.sim_config(trial)
    truth, meas = simulate(cfg)
    rows = []
    for cell in cells:
        row = MetricsRow(scenario=cfg.scenario.value, trial=trial, seed=cfg.seed, **cell.describe())
        try:
            solver = default_solver(cfg, cell)
            for key, value in grid.solver_overrides.items():
                setattr(solver, key, value)
            prob, rep = solve_cell(cell, truth, meas, cfg, grid.prior_Q(cfg), solver, grid.init)
            row.termination = rep.termination
            row.final_cost = rep.final_cost
            for key, value in rmse(truth, prob.traj, grid.metric_rate).items():
                setattr(row, key, value)
            row.solve_seconds = rep.total_seconds
            row.residual_jacobian_seconds = rep.residual_jacobian_seconds
            row.linear_solve_seconds = rep.linear_solve_seconds
            row.iterations = rep.iterations
            row.param_floats = prob.traj.num_floats
            if grid.query_rate > 0:
                row.query_rate = query_throughput(prob.traj, grid.query_rate)
        except (CtrajError, np.linalg.LinAlgError, ValueError) as exc:
            row.termination = f"error: {type(exc).__name__}: {exc}"
        rows.append(row)
    return rows


def median_row(rows: list[MetricsRow]) -> MetricsRow:
    """Per-column median over trials; NaNs from failed trials are ignored."""
    out = copy.copy(rows[0])
    out.trial, out.seed, out.aggregate = "", "", "median"
    for name in METRIC_FIELDS + ("final_cost",):
        vals = np.array([getattr(r, name) for r in rows], dtype=float)
        vals = vals[np.isfinite(vals)]
        setattr(out, name, float(np.median(vals)) if vals.size else float("nan"))
    terms = sorted({r.termination for r in rows})
    out.termination = ";".join(terms)
    return out


def run_grid(grid: ExperimentGrid, jobs: int = 1) -> list[MetricsRow]:
    """Per-trial rows for every cell followed by one median row per cell.

    Trial ``i`` uses seed ``grid.seed + i`` for every cell, so cells are
    compared on identical measurement realisations.
    """
    cells = grid.cells()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_trial = list(pool.map(_trial_rows, itertools.repeat(grid), range(grid.trials),
                                      itertools.repeat(cells)))
    else:
        per_trial = [_trial_rows(grid, i, cells) for i in range(grid.trials)]
    rows: list[MetricsRow] = []
    for c in range(len(cells)):
        cell_rows = [per_trial[i][c] for i in range(grid.trials)]
        rows += cell_rows
        rows.append(median_row(cell_rows))
    return rows


def medians(rows: list[MetricsRow]) -> list[MetricsRow]:
    return [r for r in rows if r.aggregate == "median"]


def write_csv(rows: list[MetricsRow], path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=MetricsRow.header())
        writer.writeheader()
        for r in rows:
            writer.writerow(asdict(r))
    return path


def summary_markdown(rows: list[MetricsRow], title: str = "Median metrics") -> str:
    cols = ["representation", "regularization", "k", "knot_period", "gp_stride", "prior_ratio",
            "position_rmse", "rotation_rmse", "velocity_rmse", "twist_rmse", "solve_seconds", "param_floats"]
    lines = [f"# {title}", "", f"_{ROTATION_METRIC_NOTE}_", "",
             "| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
    for r in medians(rows):
        cells = []
        for c in cols:
            v = getattr(r, c)
            cells.append(f"{v:.4g}" if isinstance(v, float) else str(v))
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def sweep_mp_period(grid: ExperimentGrid, ratios=(1.0 / 6.0, 1.0 / 5.0, 1.0 / 4.0, 1.0 / 3.0, 1.0 / 2.0, 1.0),
                    jobs: int = 1) -> list[MetricsRow]:
    """Spline cells with priors at each knot-to-prior period ratio."""
    swept = copy.copy(grid)
    swept.representations = tuple(r for r in grid.representations if r.startswith("Spline"))
    swept.regularizations = tuple(r for r in grid.regularizations if "MP" in r) or ("MP",)
    swept.prior_ratios = tuple(ratios)
    return run_grid(swept, jobs)
