"""Configuration records and YAML loading.

All config files are plain YAML mappings whose keys mirror the dataclass
fields below; unknown keys are rejected so typos surface early.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import yaml

from .dynamics import VehicleLimits


class ConfigError(ValueError):
    pass


class ScenarioKind(str, Enum):
    RAMP_MERGE = "ramp_merge"
    LEFT_TURN = "left_turn"


class CoopSetting(str, Enum):
    COOPERATIVE = "cooperative"
    MIXED = "mixed"
    NON_COOPERATIVE = "noncooperative"


class PredictionModel(str, Enum):
    IDM = "idm"          # reactive: current lateral position
    CV = "cv"
    CV_PATH = "cv_path"
    MPCC = "mpcc"


COOP_RANGES = {
    CoopSetting.COOPERATIVE: (2.0, 4.0),
    CoopSetting.MIXED: (0.0, 4.0),
    CoopSetting.NON_COOPERATIVE: (0.0, 2.0),
}


@dataclass
class IdmRanges:
    a_max: float = 3.0
    s0: float = 2.0
    T_hw: float = 1.0
    b_comf: float = 2.0
    jitter: float = 0.1  # relative, applied to a_max and T_hw


@dataclass
class ScenarioConfig:
    kind: ScenarioKind = ScenarioKind.RAMP_MERGE
    coop_setting: CoopSetting = CoopSetting.MIXED
    prediction_model: PredictionModel = PredictionModel.CV
    n_vehicles: int = 24
    gap_range: tuple = (7.0, 10.0)
    speed_range: tuple = (3.0, 4.0)
    target_speed_range: tuple = (3.0, 4.0)
    ego_speed_range: tuple = (3.0, 4.0)
    lane_width: float = 4.0
    # ramp merge
    merge_start_x: float = 30.0
    merge_length: float = 20.0
    # left turn
    junction_x: float = 45.0
    turn_radius: float = 8.0
    road_bound: float = 1.0
    timeout: float = 60.0
    dt: float = 0.1
    idm: IdmRanges = field(default_factory=IdmRanges)
    limits: VehicleLimits = field(default_factory=VehicleLimits)


@dataclass
class MpccConfig:
    q_c: float = 1.0
    q_l: float = 1.0
    q_v: float = 1.0
    q_u: float = 0.1
    q_delta: float = 1.0
    horizon: int = 15
    max_obstacles: int = 6
    obstacle_range: float = 30.0
    max_iter: int = 50


@dataclass
class SacConfig:
    hidden: tuple = (256, 256)
    batch_size: int = 2048
    gamma: float = 0.99
    lr: float = 3e-4
    init_alpha: float = 1.0
    target_entropy: float = -1.0
    tau: float = 5e-3
    target_update_interval: int = 1
    buffer_size: int = 1_000_000
    warmup_batches: int = 10
    updates_per_transition: float = 1.0


@dataclass
class RewardConfig:
    r_infeasible: float = -1.0
    r_collision: float = -300.0
    r_near: float = -1.5
    near_distance: float = 2.5


@dataclass
class TrainConfig:
    n_episodes: int = 2000
    n_workers: int = 7
    K: int = 2
    seed: int = 0
    v_ref_max: float = 5.0
    method: str = "intmpc"   # or "drl"
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    mpcc: MpccConfig = field(default_factory=MpccConfig)
    sac: SacConfig = field(default_factory=SacConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    log_every: int = 50


def _build(cls, data):
    if dataclasses.is_dataclass(cls):
        if data is None:
            return cls()
        if isinstance(data, cls):
            return data
        if not isinstance(data, dict):
            raise ConfigError(f"expected mapping for {cls.__name__}")
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(data) - set(known)
        if unknown:
            raise ConfigError(f"unknown keys for {cls.__name__}: {sorted(unknown)}")
        hints = {name: f.default_factory() if f.default_factory is not dataclasses.MISSING
                 else f.default for name, f in known.items()}
        kwargs = {}
        for k, v in data.items():
            ref = hints[k]
            if dataclasses.is_dataclass(ref):
                kwargs[k] = _build(type(ref), v)
            elif isinstance(ref, Enum):
                try:
                    kwargs[k] = type(ref)(v)
                except ValueError as exc:
                    raise ConfigError(str(exc)) from exc
            elif isinstance(ref, tuple):
                kwargs[k] = tuple(v)
            else:
                kwargs[k] = v
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
    return data


def from_dict(cls, data):
    return _build(cls, data)


def to_dict(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: to_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, tuple):
        return [to_dict(v) for v in obj]
    return obj


def load_yaml(path, cls):
    with open(Path(path)) as fh:
        data = yaml.safe_load(fh) or {}
    return from_dict(cls, data)


def dump_yaml(obj, path):
    with open(Path(path), "w") as fh:
        yaml.safe_dump(to_dict(obj), fh, sort_keys=False)
