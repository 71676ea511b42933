"""Models the other drivers use to anticipate the ego's lateral position."""
from __future__ import annotations

import math
import warnings

from ..config import MpccConfig, PredictionModel
from ..dynamics import DT


class FallbackToCV(RuntimeWarning):
    """Self-plan prediction failed and constant velocity was used instead."""


class EgoPredictor:
    """Predicts the ego's world-frame y at the end of the planning horizon.

    ``fallbacks`` counts self-plan solves that failed and were replaced by
    the constant-velocity estimate.
    """

    def __init__(self, model=PredictionModel.CV, horizon: int = 15, dt: float = DT,
                 mpcc_cfg: MpccConfig | None = None):
        self.model = PredictionModel(model)
        self.horizon = horizon
        self.dt = dt
        self.mpcc_cfg = mpcc_cfg or MpccConfig(horizon=horizon)
        self.fallbacks = 0
        self._prev = None

    @property
    def lookahead(self) -> float:
        return self.horizon * self.dt

    def reset(self):
        self._prev = None

    def __call__(self, world) -> float:
        x, y, psi, v = (float(c) for c in world.ego)
        if self.model == PredictionModel.IDM:
            return y
        if self.model == PredictionModel.CV:
            return y + v * math.sin(psi) * self.lookahead
        if self.model == PredictionModel.CV_PATH:
            path = world.geometry.path
            lam = min(world.ego_lam + v * self.lookahead, path.total_length)
            if v == 0.0:
                return y
            return float(path.point(lam)[1])
        return self._self_plan(world)

    def _self_plan(self, world) -> float:
        from ..mpcc.planner import plan_cycle  # the planner depends on this package

        v = float(world.ego[3])
        if v == 0.0:
            return float(world.ego[1])
        _, sol = plan_cycle(world, v, self._prev, self.mpcc_cfg, self.dt, collision=False)
        if not sol.usable:
            self.fallbacks += 1
            self._prev = None
            warnings.warn("self-plan prediction failed, using constant velocity", FallbackToCV)
            y, psi = float(world.ego[1]), float(world.ego[2])
            return y + v * math.sin(psi) * self.lookahead
        self._prev = sol
        return float(sol.states[-1, 1])


def predict_ego(world, model=PredictionModel.CV, horizon: int = 15, dt: float = DT) -> float:
    """One-shot prediction (no warm start kept between calls)."""
    return EgoPredictor(model, horizon, dt)(world)
