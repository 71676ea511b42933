import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from intmpc.config import RewardConfig, SacConfig
from intmpc.guidance.policy import sample_action, split_head, squashed_log_prob, to_v_ref
from intmpc.guidance.replay import InsufficientData, ReplayBuffer, Transition
from intmpc.guidance.reward import compute_reward
from intmpc.guidance.sac import SacAgent, sac_update
from intmpc.nn import Mlp

OBS = 4


def scalar_log_prob(z, mu, log_std):
    """Change of variables for a = tanh(z), written with plain floats."""
    s = math.exp(log_std)
    gauss = -0.5 * ((z - mu) / s) ** 2 - math.log(s) - 0.5 * math.log(2 * math.pi)
    return gauss - math.log(1 - math.tanh(z) ** 2)


# ------------------------------------------------------------ policy

@settings(max_examples=200, deadline=None)
@given(st.floats(-4, 4), st.floats(-3, 3), st.floats(-3, 1.5))
def test_squashed_log_prob_matches_scalar_oracle(z, mu, log_std):
    assert squashed_log_prob(z, mu, log_std) == pytest.approx(scalar_log_prob(z, mu, log_std),
                                                              abs=1e-9)


def test_squashed_log_prob_is_finite_in_the_tails():
    assert np.isfinite(squashed_log_prob(np.array([40.0, -40.0]), 0.0, 0.0)).all()


def test_squashed_density_integrates_to_one():
    a = np.linspace(-1 + 1e-9, 1 - 1e-9, 400_001)
    dens = np.exp(squashed_log_prob(np.arctanh(a), 0.3, math.log(0.7)))
    assert np.trapezoid(dens, a) == pytest.approx(1.0, abs=1e-4)


def test_log_std_is_clamped():
    mu, ls = split_head(np.array([[0.5, 10.0], [0.0, -50.0]]))
    np.testing.assert_array_equal(ls, [2.0, -20.0])


@settings(max_examples=100, deadline=None)
@given(st.floats(-30, 30))
def test_v_ref_range(z):
    v = to_v_ref(z, 5.0)
    assert 0.0 <= v <= 5.0


def test_deterministic_action_is_mean():
    net = Mlp((OBS, 2))
    net.b[0][...] = [0.4, -1.0]
    v, _, z = sample_action(net, np.zeros(OBS), None, deterministic=True, v_ref_max=4.0)
    assert z == pytest.approx(0.4)
    assert v == pytest.approx(2.0 * (math.tanh(0.4) + 1.0))


# ------------------------------------------------------------ replay and reward

def make_transition(i, done=False):
    return Transition(np.full(OBS, i, float), float(i), float(i), np.full(OBS, i + 1, float), done)


def test_replay_is_fifo():
    buf = ReplayBuffer(3, OBS)
    for i in range(5):
        buf.add(make_transition(i))
    assert len(buf) == 3 and buf.total == 5
    assert [t.reward for t in buf.transitions()] == [2.0, 3.0, 4.0]


def test_replay_sampling_and_errors():
    buf = ReplayBuffer(10, OBS)
    with pytest.raises(InsufficientData):
        buf.sample(2, np.random.default_rng(0))
    buf.add(make_transition(7, done=True))
    obs, a, r, obs2, done = buf.sample(5, np.random.default_rng(0))
    assert obs.shape == (5, OBS) and np.all(r == 7) and np.all(done == 1)
    with pytest.raises(ValueError):
        buf.add(Transition(np.zeros(OBS), 0.0, math.nan, np.zeros(OBS), False))
    with pytest.raises(ValueError):
        ReplayBuffer(0, OBS)


def test_reward_terms_add_up():
    cfg = RewardConfig()
    assert compute_reward(3.0, False, False, 10.0, cfg) == 3.0
    assert compute_reward(3.0, True, False, 10.0, cfg) == 3.0 + cfg.r_infeasible
    assert compute_reward(3.0, False, True, 1.0, cfg) == 3.0 + cfg.r_collision + cfg.r_near
    assert compute_reward(0.0, True, True, 0.0, cfg) == cfg.r_infeasible + cfg.r_collision + cfg.r_near
    # the near penalty is inclusive at the threshold
    assert compute_reward(0.0, False, False, cfg.near_distance, cfg) == cfg.r_near


# ------------------------------------------------------------ SAC

def small_agent(**kw):
    cfg = SacConfig(**{"hidden": (32, 32), "batch_size": 32, "lr": 1e-3, **kw})
    return SacAgent(OBS, cfg, seed=0)


def test_terminal_q_converges_to_reward():
    agent = small_agent()
    buf = ReplayBuffer(10, OBS)
    obs = np.array([0.2, -0.1, 0.5, 0.0])
    buf.add(Transition(obs, 0.3, 2.5, np.zeros(OBS), True))
    rng = np.random.default_rng(0)
    for _ in range(5000):
        agent.update(buf.sample(agent.cfg.batch_size, rng), rng)
    x = np.concatenate([obs, [math.tanh(0.3)]])
    assert agent.q1(x)[0] == pytest.approx(2.5, abs=1e-3)
    assert agent.q2(x)[0] == pytest.approx(2.5, abs=1e-3)


def agent_with_spread(log_std, target):
    """Agent whose policy ignores the input and has the given log-std."""
    agent = small_agent(target_entropy=target)
    agent.policy.W[-1][...] = 0.0
    agent.policy.b[-1][...] = [0.0, log_std]
    return agent


def random_buffer(rng):
    buf = ReplayBuffer(100, OBS)
    for _ in range(64):
        buf.add(Transition(rng.normal(size=OBS), rng.normal(), 0.0, rng.normal(size=OBS), False))
    return buf


def test_alpha_falls_when_entropy_exceeds_target():
    rng = np.random.default_rng(1)
    agent = agent_with_spread(-0.3, -1.0)
    rep = sac_update(agent, random_buffer(rng), rng)
    assert rep.entropy > -1.0
    assert agent.alpha < 1.0


def test_alpha_rises_when_entropy_below_target():
    rng = np.random.default_rng(1)
    agent = agent_with_spread(-4.0, -1.0)
    rep = sac_update(agent, random_buffer(rng), rng)
    assert rep.entropy < -1.0
    assert agent.alpha > 1.0


def test_actor_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    agent = small_agent()
    agent.policy.params += rng.normal(0, 0.05, agent.policy.params.size)
    obs = rng.normal(size=(8, OBS))
    eps = rng.standard_normal(8)
    _, g, _ = agent.actor_objective(obs, eps)
    p0 = agent.policy.params.copy()
    h = 1e-6
    fd = np.empty_like(p0)
    for j in range(p0.size):
        agent.policy.params[:] = p0
        agent.policy.params[j] += h
        lp = agent.actor_objective(obs, eps)[0]
        agent.policy.params[j] -= 2 * h
        lm = agent.actor_objective(obs, eps)[0]
        fd[j] = (lp - lm) / (2 * h)
    agent.policy.params[:] = p0
    assert np.linalg.norm(g - fd) <= 1e-3 * np.linalg.norm(fd)


def test_tau_one_copies_critics():
    agent = small_agent(tau=1.0)
    buf = ReplayBuffer(10, OBS)
    buf.add(make_transition(1))
    rng = np.random.default_rng(0)
    agent.update(buf.sample(8, rng), rng)
    np.testing.assert_array_equal(agent.q1_target.params, agent.q1.params)
    np.testing.assert_array_equal(agent.q2_target.params, agent.q2.params)


def test_update_requires_full_batch():
    agent = small_agent()
    buf = ReplayBuffer(10, OBS)
    buf.add(make_transition(1))
    agent.cfg = SacConfig(hidden=(32, 32), batch_size=64)
    with pytest.raises(InsufficientData):
        sac_update(agent, buf, np.random.default_rng(0))


def test_agent_checkpoint_round_trip():
    agent = small_agent()
    buf = ReplayBuffer(10, OBS)
    buf.add(make_transition(1))
    rng = np.random.default_rng(0)
    agent.update(buf.sample(8, rng), rng)
    back = SacAgent.from_checkpoint(agent.to_checkpoint(), agent.cfg)
    np.testing.assert_array_equal(back.policy.params, agent.policy.params)
    assert back.alpha == agent.alpha and back.updates == 1
