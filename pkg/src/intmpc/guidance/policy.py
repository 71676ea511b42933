"""Tanh-squashed Gaussian policy over the velocity reference."""
from __future__ import annotations

import math

import numpy as np

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def log1m_tanh2(z):
    """Numerically stable log(1 - tanh(z)^2)."""
    z = np.asarray(z, dtype=float)
    return 2.0 * (math.log(2.0) - z - np.logaddexp(0.0, -2.0 * z))


def squashed_log_prob(z, mu, log_std):
    """Log density of ``tanh(z)`` for ``z ~ N(mu, exp(log_std)^2)``."""
    std = np.exp(log_std)
    eps = (z - mu) / std
    return -0.5 * eps**2 - log_std - _HALF_LOG_2PI - log1m_tanh2(z)


def to_v_ref(z, v_ref_max: float):
    """Map a pre-squash sample to [0, v_ref_max]."""
    return 0.5 * (np.tanh(z) + 1.0) * v_ref_max


def split_head(out):
    """Mean and clamped log-std from the policy network output."""
    out = np.asarray(out, dtype=float)
    mu = out[..., 0]
    log_std = np.clip(out[..., 1], LOG_STD_MIN, LOG_STD_MAX)
    return mu, log_std


def sample_action(policy, obs, rng: np.random.Generator | None, deterministic: bool = False,
                  v_ref_max: float = 5.0):
    """Returns ``(v_ref, log_prob, z)``; batched when ``obs`` is 2-D.

    The log-probability refers to the squashed action in [-1, 1]; the
    affine map to [0, v_ref_max] only shifts it by a constant.
    """
    mu, log_std = split_head(policy(obs))
    if deterministic:
        z = mu
    else:
        z = mu + np.exp(log_std) * rng.standard_normal(np.shape(mu))
    logp = squashed_log_prob(z, mu, log_std)
    return to_v_ref(z, v_ref_max), logp, z
