"""Receding-horizon planning cycle on a traffic snapshot."""
from __future__ import annotations

import numpy as np

from ..config import MpccConfig
from ..dynamics import DT, ControlInput
from .solver import shift_controls, solve
from .types import DiscConfig, MpccProblem, MpccSolution, MpccWeights, ObstacleEllipse


def weights_from_config(cfg: MpccConfig) -> MpccWeights:
    return MpccWeights(cfg.q_c, cfg.q_l, cfg.q_v, cfg.q_u, cfg.q_delta)


def nearby_obstacles(world, horizon: int, dt: float, max_obstacles: int, max_range: float,
                     r_disc: float) -> tuple:
    """Constant-velocity ellipses for the closest other vehicles."""
    dist = np.hypot(world.x - world.ego[0], world.y - world.ego[1])
    idx = np.flatnonzero(dist <= max_range)
    idx = idx[np.argsort(dist[idx], kind="stable")][:max_obstacles]
    return tuple(
        ObstacleEllipse.constant_velocity(world.x[i], world.y[i], world.psi[i], world.v[i],
                                          horizon, dt, r_disc)
        for i in idx)


def build_problem(world, v_ref: float, cfg: MpccConfig = MpccConfig(), dt: float = DT,
                  discs: DiscConfig = DiscConfig(), collision: bool = True,
                  weights: MpccWeights | None = None) -> MpccProblem:
    g = world.geometry
    obstacles = ()
    if collision:
        obstacles = nearby_obstacles(world, cfg.horizon, dt, cfg.max_obstacles,
                                     cfg.obstacle_range, discs.radius)
    return MpccProblem(
        state=world.ego_state,
        lam0=float(world.ego_lam),
        v_ref=float(v_ref),
        path=g.path,
        weights=weights or weights_from_config(cfg),
        w_left=g.w_left,
        w_right=g.w_right,
        obstacles=obstacles,
        limits=world.limits,
        horizon=cfg.horizon,
        dt=dt,
        discs=discs,
        collision=collision,
        max_iter=cfg.max_iter,
    )


def plan_violates(states, obstacles, discs: DiscConfig = DiscConfig()) -> bool:
    """True if any disc of planned stages 1..H lies inside an obstacle ellipse."""
    S = np.asarray(states)[1:]
    for ob in obstacles:
        c, s = np.cos(ob.phi), np.sin(ob.phi)
        for off in discs.offsets:
            dx = S[:, 0] + off * np.cos(S[:, 2]) - ob.centers[1:, 0]
            dy = S[:, 1] + off * np.sin(S[:, 2]) - ob.centers[1:, 1]
            d1 = c * dx + s * dy
            d2 = -s * dx + c * dy
            if np.any(d1**2 / ob.alpha**2 + d2**2 / ob.beta**2 <= 1.0):
                return True
    return False


def braking_control(limits) -> ControlInput:
    return ControlInput(limits.a_lo, 0.0)


def plan_cycle(world, v_ref: float, prev: MpccSolution | None = None,
               cfg: MpccConfig = MpccConfig(), dt: float = DT, collision: bool = True,
               weights: MpccWeights | None = None):
    """One planning step: returns (control to apply, solution).

    The previous solution is shifted by one stage as warm start. A
    solution flagged infeasible yields the braking command instead.
    """
    problem = build_problem(world, v_ref, cfg, dt, collision=collision, weights=weights)
    warm = shift_controls(prev.controls) if prev is not None else None
    sol = solve(problem, warm)
    if sol.usable:
        return sol.first_control, sol
    return braking_control(world.limits), sol


class MpccPlanner:
    """Stateful wrapper that keeps the warm start between cycles."""

    def __init__(self, cfg: MpccConfig = MpccConfig(), dt: float = DT, collision: bool = True,
                 weights: MpccWeights | None = None):
        self.cfg = cfg
        self.dt = dt
        self.collision = collision
        self.weights = weights
        self.prev: MpccSolution | None = None
        self.n_infeasible = 0
        self.n_solves = 0
        # set on unconstrained solves: the plan enters a predicted obstacle ellipse
        self.violates_collision = False

    def reset(self):
        self.prev = None
        self.violates_collision = False

    def plan(self, world, v_ref: float):
        u, sol = plan_cycle(world, v_ref, self.prev, self.cfg, self.dt, self.collision, self.weights)
        self.n_solves += 1
        if not sol.usable:
            self.n_infeasible += 1
        self.prev = sol
        if not self.collision:
            obs = nearby_obstacles(world, self.cfg.horizon, self.dt, self.cfg.max_obstacles,
                                   self.cfg.obstacle_range, DiscConfig().radius)
            self.violates_collision = plan_violates(sol.states, obs)
        return u, sol
