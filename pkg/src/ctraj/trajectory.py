"""Interpolation contract shared by GP and spline trajectories."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Protocol

import numpy as np

from .manifold import LieGroup


@dataclass
class TrajSample:
    """Batched result of querying a trajectory at ``n`` times.

    ``jac`` has shape ``(n, 3*d, s, P)``: rows are the ``[g; g_dot; g_ddot]``
    perturbations of the sampled state, ``s`` indexes the influencing
    parameter blocks listed in ``idx`` and ``P`` is the local dimension of one
    parameter block.  Rows for unavailable derivatives are zero.
    """

    g: np.ndarray
    vel: np.ndarray
    acc: Optional[np.ndarray]
    idx: np.ndarray
    jac: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return self.vel.shape[0]


class Trajectory(Protocol):
    group: LieGroup

    @property
    def domain(self) -> tuple[float, float]: ...

    @property
    def num_blocks(self) -> int: ...

    @property
    def block_dim(self) -> int: ...

    @property
    def num_floats(self) -> int: ...

    def sample(self, times, jacobians: bool = False) -> TrajSample: ...

    def retract(self, delta: np.ndarray) -> "Trajectory": ...
