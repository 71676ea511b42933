"""Closed-loop episode driver shared by training and evaluation.

One call to :meth:`DrivingEnv.step` applies a velocity reference for K
control cycles (or until the episode ends) and returns the summed reward.
Each cycle updates the other drivers' belief about the ego, plans (or
tracks) with the low-level controller, and advances the traffic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import MpccConfig, PredictionModel, RewardConfig, ScenarioConfig
from .dynamics import ControlInput
from .guidance.observation import encode_observation, leader_follower
from .guidance.reward import compute_reward
from .mpcc.planner import MpccPlanner
from .mpcc.types import MpccWeights
from .traffic.prediction import EgoPredictor
from .traffic.scenarios import spawn_scenario
from .traffic.world import EGO_ID, EpisodeOutcome, OutcomeKind, step_world

LOW_LEVEL_MPCC = "mpcc"
LOW_LEVEL_TRACKING = "tracking"

SPEED_GAIN = 1.5      # proportional speed tracking, 1/s
PURSUIT_MIN_LOOKAHEAD = 4.0
PURSUIT_TIME = 1.0


def tracking_control(world, v_ref: float) -> ControlInput:
    """Proportional speed control plus pure-pursuit steering along the path."""
    x, y, psi, v = (float(c) for c in world.ego)
    lim = world.limits
    path = world.geometry.path
    ld = max(PURSUIT_MIN_LOOKAHEAD, PURSUIT_TIME * v)
    tx, ty = path.point(min(world.ego_lam + ld, path.total_length))
    alpha = math.atan2(ty - y, tx - x) - psi
    dist = max(math.hypot(tx - x, ty - y), 1e-6)
    delta = math.atan2(2.0 * (lim.l_r + lim.l_f) * math.sin(alpha), dist)
    a = SPEED_GAIN * (v_ref - v)
    return lim.clip(ControlInput(a, delta))


@dataclass
class EpisodeStats:
    steps: int = 0
    queries: int = 0
    infeasible: int = 0            # cycles where braking replaced the plan
    ret: float = 0.0
    collided_while_feasible: bool = False
    other_collisions: int = 0
    merge_follower_coop: float | None = None
    v_refs: list = field(default_factory=list)


class DrivingEnv:
    def __init__(self, scenario: ScenarioConfig = ScenarioConfig(), mpcc: MpccConfig = MpccConfig(),
                 reward: RewardConfig = RewardConfig(), K: int = 1, collision: bool = True,
                 low_level: str = LOW_LEVEL_MPCC, weights: MpccWeights | None = None,
                 record_trace: bool = False):
        if K < 1:
            raise ValueError("K must be >= 1")
        self.scenario = scenario
        self.reward_cfg = reward
        self.K = K
        self.low_level = low_level
        self.planner = MpccPlanner(mpcc, scenario.dt, collision=collision, weights=weights)
        self.predictor = EgoPredictor(PredictionModel(scenario.prediction_model), mpcc.horizon,
                                      scenario.dt, mpcc)
        self.record_trace = record_trace
        self.world = None
        self.outcome: EpisodeOutcome | None = None
        self.stats = EpisodeStats()
        self.trace: list = []

    @property
    def done(self) -> bool:
        return self.outcome is not None

    def reset(self, seed: int) -> np.ndarray:
        self.world = spawn_scenario(self.scenario.kind, self.scenario.coop_setting, seed, self.scenario)
        self.planner.reset()
        self.predictor.reset()
        self.outcome = None
        self.stats = EpisodeStats()
        self.trace = []
        self.world.ego_prediction = self.predictor(self.world)
        return encode_observation(self.world)

    def _cycle(self, v_ref: float) -> float:
        world = self.world
        world.ego_prediction = self.predictor(world)
        infeasible = False
        penalized = False
        if self.low_level == LOW_LEVEL_MPCC:
            u, sol = self.planner.plan(world, v_ref)
            infeasible = not sol.usable
            # without collision constraints the penalty tracks the constraint itself
            penalized = infeasible or self.planner.violates_collision
        else:
            u = tracking_control(world, v_ref)
        new, ev = step_world(world, u, self.scenario.dt)
        self.world = new
        st = self.stats
        st.steps += 1
        st.infeasible += int(infeasible)
        st.other_collisions += sum(1 for a, b in ev.collisions if EGO_ID not in (a, b))
        if self.record_trace:
            self._record(world, u, ev)
        r = compute_reward(new.ego[3], penalized, ev.ego_collided, ev.d_min, self.reward_cfg)
        if ev.ego_collided:
            self.outcome = EpisodeOutcome(OutcomeKind.COLLISION)
            st.collided_while_feasible = st.infeasible == 0
        elif ev.goal_reached:
            self.outcome = EpisodeOutcome(OutcomeKind.SUCCESS, round(new.clock, 9))
            _, foll = leader_follower(new)
            st.merge_follower_coop = float(new.coop[foll]) if foll >= 0 else None
        elif new.clock >= new.timeout - 1e-9:
            self.outcome = EpisodeOutcome(OutcomeKind.TIMEOUT)
        return r

    def step(self, v_ref: float):
        """Apply ``v_ref`` for K cycles; returns (obs, reward, terminal, info).

        ``terminal`` is True for success and collision only; a timeout ends
        the episode (``self.done``) without being terminal.
        """
        if self.world is None or self.done:
            raise RuntimeError("call reset() before step()")
        total = 0.0
        self.stats.queries += 1
        self.stats.v_refs.append(float(v_ref))
        for _ in range(self.K):
            total += self._cycle(float(v_ref))
            if self.done:
                break
        self.stats.ret += total
        terminal = self.done and self.outcome.kind != OutcomeKind.TIMEOUT
        return encode_observation(self.world), total, terminal, self.stats

    def _record(self, world, u: ControlInput, ev):
        t = round(world.clock, 9)
        e = world.ego
        self.trace.append({"t": t, "id": EGO_ID, "x": float(e[0]), "y": float(e[1]),
                           "psi": float(e[2]), "v": float(e[3]), "a": float(u.a),
                           "leader": -1, "coop": None})
        for i in range(world.x.shape[0]):
            self.trace.append({"t": t, "id": int(world.ids[i]), "x": float(world.x[i]),
                               "y": float(world.y[i]), "psi": float(world.psi[i]),
                               "v": float(world.v[i]), "a": float(ev.accelerations[i]),
                               "leader": int(ev.leaders[i]), "coop": float(world.coop[i])})
