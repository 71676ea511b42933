"""Joint training loop: SAC policy choosing the planner's velocity reference.

``n_workers`` logical workers each own an environment. They advance in
lockstep rounds inside one process: every round the current policy is
evaluated once on the batch of pending observations, each worker applies
its velocity reference for K control cycles, the resulting transitions are
appended to the shared buffer in worker order, and then the learner runs
its gradient steps. Workers therefore always act on the parameters left by
the previous round, and a run is a pure function of its config.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..config import TrainConfig
from ..env import LOW_LEVEL_MPCC, LOW_LEVEL_TRACKING, DrivingEnv
from ..nn import Checkpoint
from .observation import OBS_DIM
from .policy import sample_action
from .replay import ReplayBuffer, Transition
from .sac import SacAgent, sac_update

METHOD_INTMPC = "intmpc"
METHOD_DRL = "drl"


def episode_seed(base_seed: int, episode: int) -> int:
    """Scenario seed of a training episode; kept far from small evaluation seeds."""
    ss = np.random.SeedSequence([int(base_seed), int(episode), 0x7472])
    return int(ss.generate_state(1, dtype=np.uint32)[0]) + 2**32


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    log: list = field(default_factory=list)
    buffer_size: int = 0
    updates: int = 0


def make_env(cfg: TrainConfig, method: str | None = None) -> DrivingEnv:
    method = method or cfg.method
    if method not in (METHOD_INTMPC, METHOD_DRL):
        raise ValueError(f"unknown training method {method!r}")
    low = LOW_LEVEL_MPCC if method == METHOD_INTMPC else LOW_LEVEL_TRACKING
    # learning happens without collision constraints in the planner
    return DrivingEnv(cfg.scenario, cfg.mpcc, cfg.reward, K=cfg.K, collision=False, low_level=low)


def attach_metadata(ckpt: Checkpoint, cfg: TrainConfig) -> Checkpoint:
    ckpt.scalars.update({"K": float(cfg.K), "v_ref_max": float(cfg.v_ref_max),
                         "drl": float(cfg.method == METHOD_DRL)})
    return ckpt


def train(cfg: TrainConfig, log_path=None, progress=None) -> TrainResult:
    """Run ``cfg.n_episodes`` training episodes; returns the final checkpoint.

    ``log_path`` receives one JSON line per finished episode. ``progress`` is
    an optional callable invoked with each log record.
    """
    if cfg.n_episodes < 0:
        raise ValueError("n_episodes must be >= 0")
    if cfg.n_workers < 1:
        raise ValueError("n_workers must be >= 1")
    sac = cfg.sac
    agent = SacAgent(OBS_DIM, sac, seed=cfg.seed)
    result = TrainResult(attach_metadata(agent.to_checkpoint(), cfg))
    if cfg.n_episodes == 0:
        return result

    rng = np.random.default_rng([cfg.seed, 0x5ac])
    buffer = ReplayBuffer(sac.buffer_size, OBS_DIM)
    warmup = sac.warmup_batches * sac.batch_size
    envs = [make_env(cfg) for _ in range(cfg.n_workers)]
    obs = [None] * cfg.n_workers
    episode = [-1] * cfg.n_workers
    started = 0
    finished = 0
    owed = 0.0
    last_loss = None
    fh = open(log_path, "w") if log_path is not None else None

    def start(w):
        nonlocal started
        episode[w] = started
        obs[w] = envs[w].reset(episode_seed(cfg.seed, started))
        started += 1

    try:
        for w in range(min(cfg.n_workers, cfg.n_episodes)):
            start(w)
        while finished < cfg.n_episodes:
            active = [w for w in range(cfg.n_workers) if episode[w] >= 0]
            batch = np.stack([obs[w] for w in active])
            v_refs, _, zs = sample_action(agent.policy, batch, rng, v_ref_max=cfg.v_ref_max)
            n_new = 0
            for j, w in enumerate(active):
                env = envs[w]
                nxt, reward, terminal, stats = env.step(float(v_refs[j]))
                buffer.add(Transition(obs[w], float(zs[j]), reward, nxt, terminal))
                n_new += 1
                obs[w] = nxt
                if env.done:
                    rec = {"episode": episode[w], "worker": w,
                           "seed": episode_seed(cfg.seed, episode[w]),
                           "outcome": env.outcome.kind.value, "return": stats.ret,
                           "length": stats.steps, "queries": stats.queries,
                           "infeasible": stats.infeasible, "alpha": agent.alpha,
                           "updates": agent.updates,
                           "losses": None if last_loss is None else {
                               "q1": last_loss.q1, "q2": last_loss.q2,
                               "policy": last_loss.policy, "alpha": last_loss.alpha_loss,
                               "entropy": last_loss.entropy}}
                    result.log.append(rec)
                    if fh is not None:
                        fh.write(json.dumps(rec) + "\n")
                    if progress is not None:
                        progress(rec)
                    finished += 1
                    episode[w] = -1
                    if started < cfg.n_episodes:
                        start(w)
            if len(buffer) >= max(warmup, sac.batch_size):
                owed += sac.updates_per_transition * n_new
                n_upd = int(math.floor(owed))
                owed -= n_upd
                for _ in range(n_upd):
                    last_loss = sac_update(agent, buffer, rng)
    finally:
        if fh is not None:
            fh.close()
    result.checkpoint = attach_metadata(agent.to_checkpoint(), cfg)
    result.buffer_size = len(buffer)
    result.updates = agent.updates
    return result
