"""Fit a 2-D white-noise-on-jerk path with a GP and a cubic B-spline.

Both representations get the same position measurements (100 Hz, 1 cm
noise) and the same motion prior. The GP stores a state every 6th
measurement; the spline knot period is chosen so that both carry the same
number of floats.
"""
import numpy as np

from ctraj.bench import Cell, rmse, solve_cell
from ctraj.sim import Scenario, SimConfig, simulate

cfg = SimConfig.for_scenario(Scenario.LinearWNOJ, seed=3)
truth, meas = simulate(cfg)
print(f"simulated {cfg.duration:.0f} s, {len(meas['position'])} position fixes")

stride = 6
cells = [Cell("GP-Euclid", "MP", gp_stride=stride),
         Cell("Spline-Euclid", "MP", k=4, knot_period=stride * 0.01 / 3),
         Cell("Spline-Euclid", "none", k=4, knot_period=stride * 0.01 / 3)]

for cell in cells:
    prob, report = solve_cell(cell, truth, meas, cfg)
    err = rmse(truth, prob.traj)
    print(f"{cell.representation:14s} priors={cell.uses_priors!s:5s} floats={prob.traj.num_floats:5d} "
          f"pos {1e3 * err['position_rmse']:.2f} mm  vel {1e3 * err['velocity_rmse']:.1f} mm/s  "
          f"{report.iterations} iterations ({report.termination})")

print("\nWith priors the two representations agree; without them the dense spline chases the noise,"
      " which shows up most clearly in the velocity error.")
