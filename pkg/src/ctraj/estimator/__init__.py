"""Factor-graph least squares over GP or spline trajectories."""
from .factors import (AccelFactors, FiducialFactors, GpPriorFactors, GyroFactors, PositionFactors,
                      SplinePriorFactors, pose_from_group, specific_force)
from .problem import Problem, SolveConfig, SolveReport, info_pattern, solve
from .residuals import accel_residual, fiducial_residual, gyro_residual, position_residual

__all__ = [
    "Problem", "SolveConfig", "SolveReport", "solve", "info_pattern",
    "PositionFactors", "GyroFactors", "AccelFactors", "FiducialFactors",
    "GpPriorFactors", "SplinePriorFactors", "pose_from_group", "specific_force",
    "position_residual", "gyro_residual", "accel_residual", "fiducial_residual",
]
