"""Block structure of the normal equations for GP and spline problems.

Each character is one parameter block: a GP state or a spline control point.
The GP is block-tridiagonal whatever the prior; the spline band grows with
its order, and again when motion priors span several knot periods.
"""
from ctraj.bench import Cell, block_bandwidth, build_problem, dump_sparsity
from ctraj.sim import Scenario, SimConfig, simulate

cfg = SimConfig.for_scenario(Scenario.LinearWNOJ, duration=0.3)
truth, meas = simulate(cfg)

for cell in (Cell("GP-Euclid", "MP", gp_stride=2),
             Cell("Spline-Euclid", "none", k=4, knot_period=0.02),
             Cell("Spline-Euclid", "none", k=6, knot_period=0.02),
             Cell("Spline-Euclid", "MP", k=4, knot_period=0.02, prior_ratio=1 / 3)):
    prob = build_problem(cell, truth, meas, cfg)
    pattern = prob.info_pattern()
    print(f"{cell.representation} k={cell.k if not cell.is_gp else '-'} {cell.regularization}: "
          f"{pattern.shape[0]} blocks, semi-bandwidth {block_bandwidth(pattern)}")
    print(dump_sparsity(prob), end="\n\n")
