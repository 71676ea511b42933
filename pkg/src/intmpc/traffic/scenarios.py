"""Scenario generation: ramp merge and unprotected left turn."""
from __future__ import annotations

import dataclasses
import math

import numpy as np

from ..config import COOP_RANGES, CoopSetting, ScenarioConfig, ScenarioKind
from ..geometry import build_path
from .world import ScenarioGeometry, TrafficWorld

PATH_RUNOUT = 80.0  # straight path length kept beyond the maneuver


def merge_waypoints(cfg: ScenarioConfig) -> tuple[np.ndarray, float]:
    """Merge-lane path: straight, smoothstep lane change, straight.

    Returns the waypoints and the x coordinate where the merge completes.
    """
    y0 = -cfg.lane_width
    x_m, length = cfg.merge_start_x, cfg.merge_length
    xs = np.arange(0.0, x_m + length + PATH_RUNOUT + 1e-9, 1.0)
    t = np.clip((xs - x_m) / length, 0.0, 1.0)
    ys = y0 + cfg.lane_width * (3.0 * t**2 - 2.0 * t**3)
    return np.column_stack([xs, ys]), x_m + length


def left_turn_waypoints(cfg: ScenarioConfig) -> np.ndarray:
    y0 = -cfg.lane_width
    r = cfg.turn_radius
    x_arc = cfg.junction_x - r
    straight = np.column_stack([np.arange(0.0, x_arc, 1.0), np.full(int(math.ceil(x_arc)), y0)])
    n_arc = max(4, int(math.ceil(0.5 * math.pi * r)))
    th = np.linspace(0.0, 0.5 * math.pi, n_arc + 1)
    arc = np.column_stack([x_arc + r * np.sin(th), y0 + r - r * np.cos(th)])
    ys = np.arange(y0 + r + 1.0, y0 + r + PATH_RUNOUT + 1e-9, 1.0)
    up = np.column_stack([np.full(ys.shape, cfg.junction_x), ys])
    pts = np.vstack([straight, arc, up])
    keep = np.concatenate([[True], np.hypot(*np.diff(pts, axis=0).T) > 1e-6])
    return pts[keep]


def lane_entry_progress(path, lane_y: float, lane_width: float) -> float:
    """First progress value where the path reaches the near edge of the traffic lane."""
    lams = np.arange(0.0, path.total_length, 0.1)
    ys = np.array([path.point(s)[1] for s in lams])
    hit = np.flatnonzero(ys >= lane_y - 0.5 * lane_width)
    return float(lams[hit[0]]) if hit.size else path.total_length


def scenario_geometry(cfg: ScenarioConfig) -> ScenarioGeometry:
    if cfg.kind == ScenarioKind.RAMP_MERGE:
        pts, x_done = merge_waypoints(cfg)
        path = build_path(pts)
        goal_lam = float(path.knots[int(np.argmin(np.abs(pts[:, 0] - x_done)))])
        return ScenarioGeometry(cfg.kind, path, traffic_lane_y=0.0, traffic_dir=1,
                                ego_lane_y=-cfg.lane_width, lane_width=cfg.lane_width,
                                goal_lam=goal_lam, w_left=cfg.road_bound, w_right=cfg.road_bound,
                                conflict_lam=lane_entry_progress(path, 0.0, cfg.lane_width))
    path = build_path(left_turn_waypoints(cfg))
    return ScenarioGeometry(cfg.kind, path, traffic_lane_y=0.0, traffic_dir=-1,
                            ego_lane_y=-cfg.lane_width, lane_width=cfg.lane_width,
                            road_edge_y=0.5 * cfg.lane_width, junction_x=cfg.junction_x,
                            w_left=cfg.road_bound, w_right=cfg.road_bound,
                            conflict_lam=lane_entry_progress(path, 0.0, cfg.lane_width))


def spawn_scenario(kind, coop_setting, rng_seed, cfg: ScenarioConfig | None = None) -> TrafficWorld:
    """Sample a fresh episode.

    Vehicles fill the traffic lane upstream of the conflict area with
    successive center gaps drawn from ``cfg.gap_range``; speeds, desired
    speeds and cooperation coefficients are drawn per vehicle.
    """
    cfg = cfg or ScenarioConfig()
    kind = ScenarioKind(kind)
    coop_setting = CoopSetting(coop_setting)
    if cfg.kind != kind:
        cfg = dataclasses.replace(cfg, kind=kind)
    rng = np.random.default_rng(rng_seed)
    geom = scenario_geometry(cfg)
    n = cfg.n_vehicles

    gaps = rng.uniform(*cfg.gap_range, size=max(n - 1, 0))
    if kind == ScenarioKind.RAMP_MERGE:
        front = cfg.merge_start_x + cfg.merge_length + rng.uniform(0.0, 20.0)
    else:
        front = -(cfg.junction_x - cfg.turn_radius - rng.uniform(0.0, 20.0))
    # longitudinal coordinate along the traffic direction; convert to world x
    s = front - np.concatenate([[0.0], np.cumsum(gaps)])
    x = geom.traffic_dir * s
    v = rng.uniform(*cfg.speed_range, size=n)
    v_star = rng.uniform(*cfg.target_speed_range, size=n)
    coop = rng.uniform(*COOP_RANGES[coop_setting], size=n)
    jit = cfg.idm.jitter
    a_max = cfg.idm.a_max * rng.uniform(1 - jit, 1 + jit, size=n)
    T_hw = cfg.idm.T_hw * rng.uniform(1 - jit, 1 + jit, size=n)
    ego_v = rng.uniform(*cfg.ego_speed_range)

    path = geom.path
    start = path.point(0.0)
    ego = np.array([start[0], start[1], path.heading(0.0), ego_v])
    heading = 0.0 if geom.traffic_dir > 0 else math.pi
    return TrafficWorld(
        ego=ego,
        ego_lam=0.0,
        ids=np.arange(1, n + 1),
        x=x.astype(float),
        y=np.full(n, geom.traffic_lane_y),
        psi=np.full(n, heading),
        v=v,
        coop=coop,
        a_max=a_max,
        v_star=v_star,
        s0=np.full(n, cfg.idm.s0),
        T_hw=T_hw,
        b_comf=np.full(n, cfg.idm.b_comf),
        lane_y=np.full(n, geom.traffic_lane_y),
        lane_dir=np.full(n, geom.traffic_dir),
        geometry=geom,
        limits=cfg.limits,
        ego_prediction=float(ego[1]),
        timeout=cfg.timeout,
    )

