"""Continuous-time trajectory estimation with GP and B-spline representations."""
from . import errors, manifold, motion_model
from .errors import CtrajError
from .gp import GpTrajectory
from .manifold import SE3, SO3, Euclidean, KinematicState, LieGroup, ManifoldElement, SO3xR3
from .motion_model import LinearSystem, ModelOrder
from .spline import SplineTrajectory

__all__ = [
    "errors", "manifold", "motion_model", "CtrajError", "GpTrajectory", "SplineTrajectory",
    "LieGroup", "SO3", "SE3", "SO3xR3", "Euclidean", "ManifoldElement", "KinematicState",
    "LinearSystem", "ModelOrder",
]
