"""Per-cycle reward."""
from __future__ import annotations

from ..config import RewardConfig


def compute_reward(v: float, infeasible: bool, collided: bool, d_min: float,
                   cfg: RewardConfig = RewardConfig()) -> float:
    """Speed term plus every active penalty (they are summed, not exclusive)."""
    r = float(v)
    if infeasible:
        r += cfg.r_infeasible
    if collided:
        r += cfg.r_collision
    if d_min <= cfg.near_distance:
        r += cfg.r_near
    return r
