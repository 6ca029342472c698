"""``ctbench`` command line: run grids, sweep prior periods, print sparsity bitmaps."""
from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional

import numpy as np

from ..sim import Scenario, simulate
from .grid import ExperimentGrid, run_grid, summary_markdown, sweep_mp_period, write_csv
from .metrics import block_bandwidth, dump_sparsity
from .pipeline import build_problem

DEFAULT_CONFIG = {
    "scenario": {"name": "LinearWNOJ", "duration": 20.0},
    "grid": {
        "representations": ["GP-Euclid", "Spline-Euclid"],
        "orders": [4, 5, 6],
        "knot_periods": [0.1],
        "gp_strides": [1],
        "regularizations": ["MP"],
        "prior_ratios": [1.0 / 3.0],
        "trials": None,
        "seed": 0,
        "init": "identity",
        "metric_rate": 1000.0,
        "query_rate": 1000.0,
    },
    "noise": {"Q_diag": None, "R_diag": [1e-4, 1e-4], "noise_free": False},
    "solver": {"prior_q": None},
}

_ARRAY_FIELDS = {"R", "Q", "bias_g0", "bias_a0", "T_B_C", "d0", "v0", "a0", "T0", "twist0", "twist_dot0"}
_GRID_KEYS = {"representations", "orders", "knot_periods", "gp_strides", "regularizations", "prior_ratios",
              "trials", "seed", "init", "metric_rate", "query_rate"}


def _merge(base: dict, extra: dict) -> dict:
    out = {k: (dict(v) if isinstance(v, dict) else v) for k, v in base.items()}
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path: Optional[str]) -> dict:
    cfg = DEFAULT_CONFIG
    if path:
        with open(path) as fh:
            cfg = _merge(DEFAULT_CONFIG, json.load(fh))
    unknown = set(cfg) - set(DEFAULT_CONFIG)
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    return cfg


def _sim_overrides(cfg: dict) -> dict:
    out = {}
    for section in ("scenario", "noise"):
        for key, value in cfg[section].items():
            if key == "name" or value is None:
                continue
            if key == "Q_diag":
                out["Q"] = np.diag(np.asarray(value, dtype=float))
            elif key == "R_diag":
                out["R"] = np.diag(np.asarray(value, dtype=float))
            elif key == "tags":
                out["tags"] = [np.asarray(T, dtype=float) for T in value]
            elif key in _ARRAY_FIELDS:
                out[key] = np.asarray(value, dtype=float)
            else:
                out[key] = value
    return out


def grid_from_config(cfg: dict, trials: Optional[int] = None, seed: Optional[int] = None) -> ExperimentGrid:
    g = {k: v for k, v in cfg["grid"].items() if k in _GRID_KEYS}
    unknown = set(cfg["grid"]) - _GRID_KEYS
    if unknown:
        raise ValueError(f"unknown grid keys: {sorted(unknown)}")
    if trials is not None:
        g["trials"] = trials
    if seed is not None:
        g["seed"] = seed
    for key in ("representations", "orders", "knot_periods", "gp_strides", "regularizations", "prior_ratios"):
        g[key] = tuple(g[key])
    solver = dict(cfg["solver"])
    prior_q = solver.pop("prior_q", None)
    return ExperimentGrid(scenario=Scenario(cfg["scenario"]["name"]), sim_overrides=_sim_overrides(cfg),
                          prior_q=None if prior_q is None else tuple(prior_q), solver_overrides=solver, **g)


def _write_outputs(rows, out: str, name: str) -> None:
    os.makedirs(out, exist_ok=True)
    csv_path = write_csv(rows, os.path.join(out, f"{name}.csv"))
    md_path = os.path.join(out, f"{name}_summary.md")
    with open(md_path, "w") as fh:
        fh.write(summary_markdown(rows, f"{name}: medians"))
    print(f"wrote {csv_path}")
    print(f"wrote {md_path}")


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    grid = grid_from_config(cfg, args.trials, args.seed)
    rows = run_grid(grid, jobs=args.jobs)
    _write_outputs(rows, args.out, "run")
    print(summary_markdown(rows))
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    grid = grid_from_config(cfg, args.trials, args.seed)
    rows = sweep_mp_period(grid, ratios=tuple(args.ratios), jobs=args.jobs)
    if args.out:
        _write_outputs(rows, args.out, "sweep_mp_period")
    print(summary_markdown(rows, "Position RMSE against knot/prior period ratio"))
    return 0


def cmd_sparsity(args) -> int:
    cfg = load_config(args.config)
    grid = grid_from_config(cfg, trials=1)
    sim_cfg = grid.sim_config(0)
    if args.duration:
        sim_cfg.duration = args.duration
    truth, meas = simulate(sim_cfg)
    for cell in grid.cells():
        prob = build_problem(cell, truth, meas, sim_cfg, grid.prior_Q(sim_cfg))
        text = dump_sparsity(prob)
        label = ", ".join(f"{k}={v}" for k, v in cell.describe().items() if v != "")
        print(f"## {label}  (block semi-bandwidth {block_bandwidth(prob.info_pattern())})")
        print(text)
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            fname = "_".join(str(v) for v in cell.describe().values() if v != "").replace("/", "-")
            with open(os.path.join(args.out, f"sparsity_{fname}.txt"), "w") as fh:
                fh.write(text + "\n")
    return 0


def cmd_defaults(args) -> int:
    print(json.dumps(DEFAULT_CONFIG, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ctbench", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a Monte-Carlo grid and write CSV plus a markdown summary")
    run.add_argument("--config", required=True)
    run.add_argument("--out", required=True)
    run.add_argument("--jobs", type=int, default=1)
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", type=int)
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep-mp-period", help="spline RMSE against the knot/prior period ratio")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--out")
    sweep.add_argument("--jobs", type=int, default=1)
    sweep.add_argument("--trials", type=int)
    sweep.add_argument("--seed", type=int)
    sweep.add_argument("--ratios", type=float, nargs="+", default=[1 / 6, 1 / 5, 1 / 4, 1 / 3, 1 / 2, 1.0])
    sweep.set_defaults(func=cmd_sweep)

    spars = sub.add_parser("sparsity", help="print information-matrix block patterns")
    spars.add_argument("--config", required=True)
    spars.add_argument("--out")
    spars.add_argument("--duration", type=float, help="shorten the simulated window for readable bitmaps")
    spars.set_defaults(func=cmd_sparsity)

    defaults = sub.add_parser("print-defaults", help="print the default JSON config")
    defaults.set_defaults(func=cmd_defaults)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
