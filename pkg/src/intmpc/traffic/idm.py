"""Intelligent Driver Model with predictive leader selection (P-IDM)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .collision import VEHICLE_LENGTH

B_HARD = 8.0  # emergency deceleration bound, m/s^2
MIN_GAP = 0.1

NO_LEADER = -1
EGO_LEADER = -2


@dataclass(frozen=True)
class IdmParams:
    a_max: float = 3.0
    v_star: float = 3.5
    s0: float = 2.0
    T_hw: float = 1.0
    b_comf: float = 2.0

    def __post_init__(self):
        if min(self.a_max, self.v_star, self.s0, self.T_hw, self.b_comf) <= 0:
            raise ValueError("IDM parameters must be positive")


def desired_gap(v, dv, s0, T_hw, a_max, b_comf):
    s = s0 + v * T_hw + v * dv / (2.0 * np.sqrt(a_max * b_comf))
    return np.maximum(s, s0)


def idm_accelerations(v, v_star, a_max, s0, T_hw, b_comf, gap, dv, has_leader):
    """Vectorized IDM acceleration; ``gap``/``dv`` are ignored where no leader."""
    free = 1.0 - (v / v_star) ** 4
    s_star = desired_gap(v, dv, s0, T_hw, a_max, b_comf)
    inter = np.where(has_leader, (s_star / np.maximum(gap, MIN_GAP)) ** 2, 0.0)
    acc = a_max * (free - inter)
    return np.clip(acc, -B_HARD, a_max)


def idm_acceleration(v: float, idm: IdmParams, leader: tuple[float, float] | None = None) -> float:
    """Scalar IDM command.

    ``leader`` is ``(leader_speed, gap)`` with ``gap`` bumper-to-bumper in
    meters, or None on a free road.
    """
    if leader is None:
        acc = idm.a_max * (1.0 - (v / idm.v_star) ** 4)
    else:
        v_lead, gap = leader
        s_star = max(idm.s0, idm.s0 + v * idm.T_hw
                     + v * (v - v_lead) / (2.0 * math.sqrt(idm.a_max * idm.b_comf)))
        acc = idm.a_max * (1.0 - (v / idm.v_star) ** 4 - (s_star / max(gap, MIN_GAP)) ** 2)
    return min(max(acc, -B_HARD), idm.a_max)


def select_leaders(x, y_lane, lane_dir, coop, ego_x, ego_pred_y):
    """Leader index for every other vehicle.

    Returns an int array holding the index of the leading other vehicle,
    ``EGO_LEADER`` when the ego is the nearest leader candidate, or
    ``NO_LEADER``. Other vehicles in the same lane are always candidates when
    ahead; the ego is a candidate when ahead and its predicted lateral
    distance from the vehicle's lane center is below the cooperation
    coefficient.
    """
    n = x.shape[0]
    s = lane_dir * x
    ahead_dist = np.full(n, np.inf)
    ahead_idx = np.full(n, NO_LEADER, dtype=np.int64)
    for ly in np.unique(y_lane):
        members = np.flatnonzero(y_lane == ly)
        order = members[np.argsort(s[members], kind="stable")]
        if order.size > 1:
            ahead_idx[order[:-1]] = order[1:]
            ahead_dist[order[:-1]] = s[order[1:]] - s[order[:-1]]
    ego_s = lane_dir * ego_x
    ego_dist = ego_s - s
    ego_cand = (ego_dist > 0.0) & (np.abs(ego_pred_y - y_lane) < coop)
    use_ego = ego_cand & (ego_dist <= ahead_dist)
    return np.where(use_ego, EGO_LEADER, ahead_idx)


def leader_gap(x1, y1, x2, y2):
    """Bumper-to-bumper gap from center distance, floored."""
    return np.maximum(np.hypot(x2 - x1, y2 - y1) - VEHICLE_LENGTH, MIN_GAP)
