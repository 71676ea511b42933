"""Fixed-capacity FIFO replay buffer."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InsufficientData(RuntimeError):
    pass


@dataclass(frozen=True)
class Transition:
    obs: np.ndarray
    action: float        # pre-squash sample z
    reward: float
    next_obs: np.ndarray
    done: bool           # terminal only; time limits are not terminal


class ReplayBuffer:
    def __init__(self, capacity: int, obs_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.obs = np.zeros((self.capacity, obs_dim))
        self.next_obs = np.zeros((self.capacity, obs_dim))
        self.action = np.zeros(self.capacity)
        self.reward = np.zeros(self.capacity)
        self.done = np.zeros(self.capacity)
        self.size = 0
        self.head = 0          # next write slot
        self.total = 0         # insertions so far

    def __len__(self):
        return self.size

    def add(self, t: Transition):
        if not np.isfinite(t.reward):
            raise ValueError("reward must be finite")
        i = self.head
        self.obs[i] = t.obs
        self.next_obs[i] = t.next_obs
        self.action[i] = t.action
        self.reward[i] = t.reward
        self.done[i] = float(t.done)
        self.head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.total += 1

    def transitions(self) -> list[Transition]:
        """Stored transitions from oldest to newest."""
        start = self.head if self.size == self.capacity else 0
        idx = (start + np.arange(self.size)) % self.capacity
        return [Transition(self.obs[i].copy(), float(self.action[i]), float(self.reward[i]),
                           self.next_obs[i].copy(), bool(self.done[i])) for i in idx]

    def sample(self, batch_size: int, rng: np.random.Generator):
        if self.size < 1 or batch_size < 1:
            raise InsufficientData("replay buffer is empty")
        idx = rng.integers(0, self.size, size=batch_size)
        return (self.obs[idx], self.action[idx], self.reward[idx], self.next_obs[idx], self.done[idx])
