"""Monte-Carlo benchmark harness: grids, metrics and the ``ctbench`` CLI."""
from .grid import ExperimentGrid, MetricsRow, median_row, medians, run_grid, summary_markdown, sweep_mp_period, write_csv
from .metrics import block_bandwidth, dump_sparsity, query_throughput, rmse
from .pipeline import Cell, build_problem, solve_cell

__all__ = [
    "ExperimentGrid", "MetricsRow", "run_grid", "median_row", "medians", "write_csv", "summary_markdown",
    "sweep_mp_period", "rmse", "dump_sparsity", "block_bandwidth", "query_throughput", "Cell",
    "build_problem", "solve_cell",
]
