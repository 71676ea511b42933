"""Soft actor-critic with twin critics and automatic entropy temperature.

The actor outputs (mean, log-std) of a Gaussian over a pre-squash action
``z``; the environment action is ``tanh(z)`` in [-1, 1]. Critics take the
observation concatenated with ``tanh(z)``. All gradients are composed by
hand from :meth:`Mlp.backward`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..config import SacConfig
from ..nn import AdamState, Checkpoint, Mlp, adam_step
from .policy import LOG_STD_MAX, LOG_STD_MIN, split_head, squashed_log_prob
from .replay import InsufficientData, ReplayBuffer


@dataclass
class LossReport:
    q1: float
    q2: float
    policy: float
    alpha_loss: float
    alpha: float
    entropy: float


class SacAgent:
    def __init__(self, obs_dim: int, cfg: SacConfig = SacConfig(), seed: int = 0):
        self.cfg = cfg
        self.obs_dim = obs_dim
        rng = np.random.default_rng([seed, 7919])
        hid = tuple(cfg.hidden)
        self.policy = Mlp.init((obs_dim, *hid, 2), rng)
        self.q1 = Mlp.init((obs_dim + 1, *hid, 1), rng)
        self.q2 = Mlp.init((obs_dim + 1, *hid, 1), rng)
        self.q1_target = self.q1.copy()
        self.q2_target = self.q2.copy()
        self.log_alpha = np.array([math.log(cfg.init_alpha)])
        self.opt_policy = AdamState.like(self.policy.params, cfg.lr)
        self.opt_q1 = AdamState.like(self.q1.params, cfg.lr)
        self.opt_q2 = AdamState.like(self.q2.params, cfg.lr)
        self.opt_alpha = AdamState.like(self.log_alpha, cfg.lr)
        self.updates = 0

    @property
    def alpha(self) -> float:
        return float(math.exp(self.log_alpha[0]))

    def _critic_in(self, obs, a):
        return np.concatenate([obs, a[:, None]], axis=1)

    def _sample(self, obs, rng):
        out, cache = self.policy.forward(obs, return_cache=True)
        mu, log_std = split_head(out)
        eps = rng.standard_normal(mu.shape)
        std = np.exp(log_std)
        z = mu + std * eps
        return z, mu, log_std, std, eps, out, cache

    def actor_objective(self, obs, eps):
        """Reparameterized actor loss ``mean(alpha logp - min Q)`` at noise ``eps``.

        Returns (loss, gradient w.r.t. the policy parameters, log-probs).
        """
        B = obs.shape[0]
        alpha = self.alpha
        out, pcache = self.policy.forward(obs, return_cache=True)
        mu, log_std = split_head(out)
        std = np.exp(log_std)
        z = mu + std * eps
        t = np.tanh(z)
        logp = squashed_log_prob(z, mu, log_std)
        xa = self._critic_in(obs, t)
        q1, c1 = self.q1.forward(xa, return_cache=True)
        q2, c2 = self.q2.forward(xa, return_cache=True)
        use1 = q1[:, 0] <= q2[:, 0]
        qmin = np.where(use1, q1[:, 0], q2[:, 0])
        ones = np.ones((B, 1))
        _, gx1 = self.q1.backward(c1, ones)
        _, gx2 = self.q2.backward(c2, ones)
        dq_da = np.where(use1, gx1[:, -1], gx2[:, -1])
        dsq = 1.0 - t * t
        d_mu = (alpha * 2.0 * t - dq_da * dsq) / B
        d_ls = (alpha * (-1.0 + 2.0 * t * std * eps) - dq_da * dsq * std * eps) / B
        d_ls = np.where((out[:, 1] > LOG_STD_MIN) & (out[:, 1] < LOG_STD_MAX), d_ls, 0.0)
        gp, _ = self.policy.backward(pcache, np.stack([d_mu, d_ls], axis=1))
        return float(np.mean(alpha * logp - qmin)), gp, logp

    def update(self, batch, rng: np.random.Generator) -> LossReport:
        obs, z_b, r, obs2, done = batch
        B = obs.shape[0]
        gamma, alpha = self.cfg.gamma, self.alpha

        # critic targets
        z2, mu2, ls2, _, _, _, _ = self._sample(obs2, rng)
        logp2 = squashed_log_prob(z2, mu2, ls2)
        x2 = self._critic_in(obs2, np.tanh(z2))
        q_next = np.minimum(self.q1_target(x2)[:, 0], self.q2_target(x2)[:, 0]) - alpha * logp2
        y = r + gamma * (1.0 - done) * q_next

        x = self._critic_in(obs, np.tanh(z_b))
        losses = []
        for net, opt in ((self.q1, self.opt_q1), (self.q2, self.opt_q2)):
            q, cache = net.forward(x, return_cache=True)
            err = q[:, 0] - y
            losses.append(float(np.mean(err**2)))
            g, _ = net.backward(cache, (2.0 / B) * err[:, None])
            adam_step(net.params, g, opt)

        # actor
        eps = rng.standard_normal(B)
        policy_loss, gp, logp = self.actor_objective(obs, eps)
        adam_step(self.policy.params, gp, self.opt_policy)

        # temperature
        g_alpha = -np.mean(logp + self.cfg.target_entropy)
        alpha_loss = float(-self.log_alpha[0] * np.mean(logp + self.cfg.target_entropy))
        adam_step(self.log_alpha, np.array([g_alpha]), self.opt_alpha)

        self.updates += 1
        if self.updates % self.cfg.target_update_interval == 0:
            tau = self.cfg.tau
            for net, tgt in ((self.q1, self.q1_target), (self.q2, self.q2_target)):
                tgt.params *= 1.0 - tau
                tgt.params += tau * net.params
        return LossReport(losses[0], losses[1], policy_loss, alpha_loss, self.alpha,
                          float(-np.mean(logp)))

    def to_checkpoint(self) -> Checkpoint:
        return Checkpoint(
            nets={"policy": self.policy.copy(), "q1": self.q1.copy(), "q2": self.q2.copy(),
                  "q1_target": self.q1_target.copy(), "q2_target": self.q2_target.copy()},
            scalars={"log_alpha": float(self.log_alpha[0]), "updates": float(self.updates)},
        )

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint, cfg: SacConfig = SacConfig()) -> "SacAgent":
        pol = ckpt.nets["policy"]
        agent = cls.__new__(cls)
        agent.cfg = cfg
        agent.obs_dim = pol.sizes[0]
        agent.policy = pol.copy()
        for name in ("q1", "q2", "q1_target", "q2_target"):
            setattr(agent, name, ckpt.nets[name].copy())
        agent.log_alpha = np.array([ckpt.scalars.get("log_alpha", math.log(cfg.init_alpha))])
        agent.opt_policy = AdamState.like(agent.policy.params, cfg.lr)
        agent.opt_q1 = AdamState.like(agent.q1.params, cfg.lr)
        agent.opt_q2 = AdamState.like(agent.q2.params, cfg.lr)
        agent.opt_alpha = AdamState.like(agent.log_alpha, cfg.lr)
        agent.updates = int(ckpt.scalars.get("updates", 0))
        return agent


def sac_update(agent: SacAgent, buffer: ReplayBuffer, rng: np.random.Generator) -> LossReport:
    """One gradient step on a batch drawn from ``buffer``."""
    bs = agent.cfg.batch_size
    if len(buffer) < bs:
        raise InsufficientData(f"buffer holds {len(buffer)} < batch size {bs}")
    return agent.update(buffer.sample(bs, rng), rng)

