"""Observation encoding for the velocity-reference policy.

The vector holds the ego's own features followed by the relative states of
the traffic-lane leader and follower around the ego's projected position
on that lane, both expressed in the ego frame:

    [v, d_conflict, y_lane, psi_path,
     leader dx, dy, dpsi, dv, follower dx, dy, dpsi, dv]

``d_conflict`` is the remaining path length to the point where the path
enters the traffic lane, ``y_lane`` the ego's lateral offset from that
lane's center and ``psi_path`` its heading error against the path.
Distances are divided by ``POS_SCALE`` and speeds by ``SPEED_SCALE``
before they reach the network.
"""
from __future__ import annotations

import math

import numpy as np

from ..dynamics import wrap_angle

OBS_DIM = 12
SENTINEL_DX = 50.0
POS_SCALE = 10.0
SPEED_SCALE = 5.0


def leader_follower(world) -> tuple[int, int]:
    """Indices of the nearest traffic-lane vehicles ahead of and behind the ego (-1 if none)."""
    g = world.geometry
    on_lane = np.flatnonzero(world.lane_y == g.traffic_lane_y)
    if on_lane.size == 0:
        return -1, -1
    s = world.lane_dir[on_lane] * world.x[on_lane]
    s_ego = g.traffic_dir * world.ego[0]
    ahead = s >= s_ego
    lead = on_lane[ahead][np.argmin(s[ahead])] if ahead.any() else -1
    foll = on_lane[~ahead][np.argmax(s[~ahead])] if (~ahead).any() else -1
    return int(lead), int(foll)


def relative_state(world, i: int) -> np.ndarray:
    ex, ey, epsi, ev = world.ego
    c, s = math.cos(epsi), math.sin(epsi)
    dx, dy = world.x[i] - ex, world.y[i] - ey
    return np.array([c * dx + s * dy, -s * dx + c * dy,
                     wrap_angle(float(world.psi[i] - epsi)), world.v[i] - ev])


def encode_observation(world) -> np.ndarray:
    g = world.geometry
    ex, ey, epsi, ev = (float(c) for c in world.ego)
    lead, foll = leader_follower(world)
    leader = relative_state(world, lead) if lead >= 0 else np.array([SENTINEL_DX, 0.0, 0.0, 0.0])
    follower = relative_state(world, foll) if foll >= 0 else np.array([-SENTINEL_DX, 0.0, 0.0, 0.0])
    obs = np.empty(OBS_DIM)
    obs[0] = ev / SPEED_SCALE
    obs[1] = (g.conflict_lam - world.ego_lam) / POS_SCALE
    obs[2] = (ey - g.traffic_lane_y) / POS_SCALE
    obs[3] = wrap_angle(epsi - g.path.heading(world.ego_lam))
    for off, rel in ((4, leader), (8, follower)):
        obs[off] = rel[0] / POS_SCALE
        obs[off + 1] = rel[1] / POS_SCALE
        obs[off + 2] = rel[2]
        obs[off + 3] = rel[3] / SPEED_SCALE
    return obs
