"""Problem and solution records for the contouring planner."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..dynamics import DT, ControlInput, VehicleLimits, VehicleState
from ..geometry import ReferencePath
from ..traffic.collision import VEHICLE_LENGTH, VEHICLE_WIDTH


class SolveStatus(str, Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    MAX_ITER = "max_iter"


@dataclass(frozen=True)
class MpccWeights:
    q_c: float = 1.0
    q_l: float = 1.0
    q_v: float = 1.0
    q_u: float = 0.1
    q_delta: float = 1.0

    def __post_init__(self):
        vals = self.as_array()
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise ValueError("weights must be finite and nonnegative")

    def as_array(self) -> np.ndarray:
        return np.array([self.q_c, self.q_l, self.q_v, self.q_u, self.q_delta], dtype=float)

    def scaled(self, k: float) -> "MpccWeights":
        return MpccWeights(*(k * self.as_array()))


# Obstacle axes chosen so that (a + r, b + r) with the default disc radius
# contains the vehicle body grown by r. The plain enclosing ellipse of the
# body (axes L/sqrt2, W/sqrt2) does not: grown by r it misses the corners.
SEMI_MAJOR = 3.25
SEMI_MINOR = 1.70


@dataclass(frozen=True)
class DiscConfig:
    """Ego body covered by ``len(offsets)`` equal discs along its axis.

    The default radius is the smallest one for which three discs at these
    offsets cover the full 5 x 2 m rectangle.
    """

    offsets: tuple = (-5.0 / 3.0, 0.0, 5.0 / 3.0)
    radius: float = math.hypot(5.0 / 6.0, 1.0)

    def __post_init__(self):
        if len(self.offsets) < 1 or self.radius <= 0:
            raise ValueError("need at least one disc with positive radius")


@dataclass(frozen=True)
class ObstacleEllipse:
    """Enlarged ellipse around another vehicle, one center per stage."""

    centers: np.ndarray    # (H+1, 2)
    phi: float
    alpha: float
    beta: float

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=float)
        if c.ndim != 2 or c.shape[1] != 2 or c.shape[0] < 1:
            raise ValueError("centers must be an (H+1, 2) array")
        if not (self.alpha >= self.beta > 0):
            raise ValueError("need alpha >= beta > 0")
        object.__setattr__(self, "centers", c)

    @property
    def center(self) -> np.ndarray:
        return self.centers[0]

    @classmethod
    def constant_velocity(cls, x, y, psi, v, horizon, dt=DT, r_disc=DiscConfig().radius):
        """Ellipse for a vehicle predicted at constant speed and heading."""
        k = np.arange(horizon + 1) * dt * v
        centers = np.column_stack([x + k * math.cos(psi), y + k * math.sin(psi)])
        return cls(centers, float(psi), SEMI_MAJOR + r_disc, SEMI_MINOR + r_disc)


@dataclass(frozen=True)
class MpccProblem:
    state: VehicleState
    lam0: float
    v_ref: float
    path: ReferencePath
    weights: MpccWeights = field(default_factory=MpccWeights)
    w_left: float = 1.0
    w_right: float = 1.0
    obstacles: tuple = ()
    limits: VehicleLimits = field(default_factory=VehicleLimits)
    horizon: int = 15
    dt: float = DT
    discs: DiscConfig = field(default_factory=DiscConfig)
    collision: bool = True
    max_iter: int = 50

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.w_left <= 0 or self.w_right <= 0:
            raise ValueError("road bounds must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        for ob in self.obstacles:
            if ob.centers.shape[0] != self.horizon + 1:
                raise ValueError("obstacle needs one center per stage")


@dataclass
class MpccSolution:
    status: SolveStatus
    controls: np.ndarray        # (H, 2)
    states: np.ndarray          # (H+1, 4), row 0 is the initial state
    progress: np.ndarray        # (H+1,)
    cost: float
    iterations: int
    kkt_residual: float
    max_violation: float
    log: np.ndarray | None = None   # per iteration: iterate, merit, kkt, violation

    @property
    def feasible(self) -> bool:
        return self.status == SolveStatus.FEASIBLE

    @property
    def usable(self) -> bool:
        """Feasible, or stopped at the iteration cap without violations."""
        return self.status != SolveStatus.INFEASIBLE

    @property
    def first_control(self) -> ControlInput:
        return ControlInput(float(self.controls[0, 0]), float(self.controls[0, 1]))
