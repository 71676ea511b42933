"""Traffic world state and the per-step simulation update."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..config import ScenarioKind
from ..dynamics import ControlInput, VehicleLimits, VehicleState, step_array, wrap_angle
from ..geometry import ReferencePath, errors_at
from .collision import VEHICLE_LENGTH, VEHICLE_WIDTH, check_collision, clearance_to_boxes, corners
from .idm import EGO_LEADER, NO_LEADER, IdmParams, idm_accelerations, leader_gap, select_leaders

EGO_ID = 0


class OutcomeKind(str, Enum):
    SUCCESS = "success"
    COLLISION = "collision"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class EpisodeOutcome:
    kind: OutcomeKind
    time_to_goal: float | None = None


@dataclass(frozen=True)
class OtherVehicle:
    id: int
    state: VehicleState
    coop: float
    idm: IdmParams


@dataclass(frozen=True)
class ScenarioGeometry:
    kind: ScenarioKind
    path: ReferencePath
    traffic_lane_y: float
    traffic_dir: int
    ego_lane_y: float
    lane_width: float
    goal_lam: float = 0.0          # ramp merge: merge-completion progress
    road_edge_y: float = 0.0       # left turn: far edge of the main road
    junction_x: float = 0.0
    w_left: float = 1.0
    w_right: float = 1.0
    conflict_lam: float = 0.0      # progress where the path enters the traffic lane


@dataclass
class StepEvents:
    collisions: list = field(default_factory=list)   # (id, id) pairs
    ego_collided: bool = False
    goal_reached: bool = False
    d_min: float = np.inf
    accelerations: np.ndarray | None = None
    leaders: np.ndarray | None = None                # leader ids, -1 for none


@dataclass
class TrafficWorld:
    """All vehicles plus the others' belief about the ego plan.

    Other vehicles are stored column-wise; ``others`` gives record views.
    Vehicle ids are ``1..n``; the ego has id 0.
    """

    ego: np.ndarray                 # x, y, psi, v
    ego_lam: float
    ids: np.ndarray
    x: np.ndarray
    y: np.ndarray
    psi: np.ndarray
    v: np.ndarray
    coop: np.ndarray
    a_max: np.ndarray
    v_star: np.ndarray
    s0: np.ndarray
    T_hw: np.ndarray
    b_comf: np.ndarray
    lane_y: np.ndarray
    lane_dir: np.ndarray
    geometry: ScenarioGeometry
    limits: VehicleLimits = field(default_factory=VehicleLimits)
    ego_prediction: float = 0.0      # predicted ego lateral (world y) at horizon end
    clock: float = 0.0
    timeout: float = 60.0

    @property
    def scenario(self) -> ScenarioKind:
        return self.geometry.kind

    @property
    def ego_state(self) -> VehicleState:
        e = self.ego
        return VehicleState(float(e[0]), float(e[1]), wrap_angle(float(e[2])), float(e[3]))

    @property
    def others(self) -> list[OtherVehicle]:
        return [self.other(i) for i in range(self.x.shape[0])]

    def other(self, i: int) -> OtherVehicle:
        return OtherVehicle(
            int(self.ids[i]),
            VehicleState(float(self.x[i]), float(self.y[i]), float(self.psi[i]), float(self.v[i])),
            float(self.coop[i]),
            IdmParams(float(self.a_max[i]), float(self.v_star[i]), float(self.s0[i]),
                      float(self.T_hw[i]), float(self.b_comf[i])),
        )

    def copy(self) -> "TrafficWorld":
        new = copy.copy(self)
        for name in ("ego", "x", "v"):
            setattr(new, name, getattr(self, name).copy())
        return new

    def leaders(self) -> np.ndarray:
        """Leader index per other vehicle (see :func:`select_leaders`)."""
        return select_leaders(self.x, self.lane_y, self.lane_dir, self.coop,
                              self.ego[0], self.ego_prediction)

    def contour_error(self) -> float:
        return errors_at(self.geometry.path, self.ego_lam, self.ego[:2])[0]

    def goal_reached(self) -> bool:
        g = self.geometry
        if g.kind == ScenarioKind.RAMP_MERGE:
            return self.ego_lam >= g.goal_lam and abs(self.contour_error()) < 0.5
        c = corners(self.ego[0], self.ego[1], self.ego[2])
        half = 0.5 * g.lane_width
        return bool(np.all(c[:, 1] >= g.road_edge_y)
                    and np.all(np.abs(c[:, 0] - g.junction_x) <= half))

    def min_clearance(self) -> float:
        if self.x.size == 0:
            return np.inf
        return float(clearance_to_boxes(self.ego[0], self.ego[1], self.x, self.y, self.psi).min())


def select_leader(world: TrafficWorld, i: int):
    """Leader of other vehicle ``i``: an :class:`OtherVehicle`, ``"ego"`` or None."""
    idx = world.leaders()[i]
    if idx == NO_LEADER:
        return None
    if idx == EGO_LEADER:
        return "ego"
    return world.other(int(idx))


def other_accelerations(world: TrafficWorld) -> tuple[np.ndarray, np.ndarray]:
    """P-IDM acceleration commands and leader ids for all other vehicles."""
    lead = world.leaders()
    has = lead != NO_LEADER
    safe = np.where(lead >= 0, lead, 0)
    lx = np.where(lead == EGO_LEADER, world.ego[0], world.x[safe])
    ly = np.where(lead == EGO_LEADER, world.ego[1], world.y[safe])
    lv = np.where(lead == EGO_LEADER, world.ego[3], world.v[safe])
    gap = leader_gap(world.x, world.y, lx, ly)
    acc = idm_accelerations(world.v, world.v_star, world.a_max, world.s0, world.T_hw,
                            world.b_comf, gap, world.v - lv, has)
    lead_ids = np.where(lead == EGO_LEADER, EGO_ID,
                        np.where(lead >= 0, world.ids[safe], -1))
    return acc, lead_ids


def step_world(world: TrafficWorld, ego_control: ControlInput, dt: float):
    """Advance every vehicle by ``dt``; returns the new world and its events."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    new = world.copy()
    acc, lead_ids = other_accelerations(world)

    v0 = world.v
    v1 = v0 + acc * dt
    stops = v1 < 0.0
    disp = np.where(stops, v0 * v0 / (2.0 * np.maximum(-acc, 1e-12)), v0 * dt + 0.5 * acc * dt * dt)
    new.v = np.maximum(v1, 0.0)
    new.x = world.x + world.lane_dir * disp

    u = world.limits.clip(ego_control)
    new.ego = step_array(world.ego, u.a, u.delta, dt, world.limits)
    new.ego_lam = world.geometry.path.project(new.ego[:2], world.ego_lam)
    new.clock = world.clock + dt

    events = StepEvents(accelerations=acc, leaders=lead_ids)
    ego_s = new.ego_state
    near = np.flatnonzero(np.hypot(new.x - new.ego[0], new.y - new.ego[1])
                          <= np.hypot(VEHICLE_LENGTH, VEHICLE_WIDTH))
    for i in near:
        other = VehicleState(float(new.x[i]), float(new.y[i]), float(new.psi[i]), float(new.v[i]))
        if check_collision(ego_s, other):
            events.collisions.append((EGO_ID, int(new.ids[i])))
            events.ego_collided = True
    # same-lane others only interact longitudinally
    for ly in np.unique(new.lane_y):
        members = np.flatnonzero(new.lane_y == ly)
        s = new.lane_dir[members] * new.x[members]
        order = members[np.argsort(s, kind="stable")]
        ds = np.abs(np.diff(new.x[order]))
        for k in np.flatnonzero(ds <= VEHICLE_LENGTH):
            events.collisions.append((int(new.ids[order[k]]), int(new.ids[order[k + 1]])))
    events.d_min = new.min_clearance()
    events.goal_reached = (not events.ego_collided) and new.goal_reached()
    return new, events
