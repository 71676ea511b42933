import dataclasses
import json

import numpy as np
import pytest

from intmpc.config import SacConfig, TrainConfig
from intmpc.env import LOW_LEVEL_TRACKING, DrivingEnv
from intmpc.guidance.observation import OBS_DIM
from intmpc.guidance.train import episode_seed, make_env, train
from intmpc.nn import checkpoint_bytes
from intmpc.traffic.world import OutcomeKind

TINY = SacConfig(hidden=(8, 8), batch_size=16, warmup_batches=1, lr=1e-3)


def tiny(**kw):
    return TrainConfig(**{"n_episodes": 3, "n_workers": 2, "K": 4, "sac": TINY, "method": "drl",
                          **kw})


def test_zero_episodes_returns_initial_policy():
    res = train(tiny(n_episodes=0))
    again = train(tiny(n_episodes=0))
    assert res.updates == 0 and res.log == []
    assert checkpoint_bytes(res.checkpoint) == checkpoint_bytes(again.checkpoint)
    assert res.checkpoint.scalars["K"] == 4.0
    assert res.checkpoint.nets["policy"].sizes == (OBS_DIM, 8, 8, 2)


def test_training_is_deterministic(tmp_path):
    a = train(tiny(), log_path=tmp_path / "a.jsonl")
    b = train(tiny(), log_path=tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    assert checkpoint_bytes(a.checkpoint) == checkpoint_bytes(b.checkpoint)
    assert a.updates > 0


def test_log_records(tmp_path):
    res = train(tiny(), log_path=tmp_path / "log.jsonl")
    rows = [json.loads(x) for x in (tmp_path / "log.jsonl").read_text().splitlines()]
    assert sorted(r["episode"] for r in rows) == [0, 1, 2]
    for r in rows:
        assert r["outcome"] in {k.value for k in OutcomeKind}
        assert r["seed"] == episode_seed(0, r["episode"])
        # K cycles per query, fewer only on the final query
        assert (r["queries"] - 1) * 4 < r["length"] <= r["queries"] * 4
    assert res.buffer_size == sum(r["queries"] for r in rows)


def test_training_seeds_avoid_evaluation_seeds():
    seeds = {episode_seed(0, e) for e in range(1000)}
    assert len(seeds) == 1000
    assert min(seeds) >= 2**32


def test_invalid_settings():
    with pytest.raises(ValueError):
        train(tiny(n_episodes=-1))
    with pytest.raises(ValueError):
        train(tiny(n_workers=0))
    with pytest.raises(ValueError):
        make_env(tiny(), method="bogus")


def test_training_env_has_no_collision_constraints():
    env = make_env(tiny(method="intmpc"))
    assert env.planner.collision is False
    assert make_env(tiny()).low_level == LOW_LEVEL_TRACKING


# ------------------------------------------------------------ environment

def test_env_repeats_reference_for_k_cycles():
    env = DrivingEnv(K=3, low_level=LOW_LEVEL_TRACKING)
    obs = env.reset(5)
    assert obs.shape == (OBS_DIM,)
    _, r, terminal, st = env.step(2.0)
    assert st.steps == 3 and st.queries == 1 and not terminal
    assert st.v_refs == [2.0]


def test_env_step_before_reset_raises():
    with pytest.raises(RuntimeError):
        DrivingEnv().step(1.0)


def test_env_rejects_bad_k():
    with pytest.raises(ValueError):
        DrivingEnv(K=0)


def test_standing_still_times_out_without_terminal_flag():
    scen = dataclasses.replace(TrainConfig().scenario, timeout=1.0)
    env = DrivingEnv(scen, K=5, low_level=LOW_LEVEL_TRACKING)
    env.reset(0)
    terminal = False
    while not env.done:
        _, _, terminal, _ = env.step(0.0)
    assert env.outcome.kind == OutcomeKind.TIMEOUT
    assert terminal is False


def test_env_is_deterministic():
    def run():
        env = DrivingEnv(K=2)
        env.reset(11)
        out = []
        for _ in range(10):
            o, r, _, _ = env.step(2.5)
            out.append((o.copy(), r))
            if env.done:
                break
        return out

    for (o1, r1), (o2, r2) in zip(run(), run()):
        np.testing.assert_array_equal(o1, o2)
        assert r1 == r2
