"""Greedy evaluation episodes and episodic-return bookkeeping."""
from __future__ import annotations

import numpy as np

from ..envs.base import VecEnv
from ..net import NetworkParams, q_values


class EpisodeTracker:
    def __init__(self, num_envs: int):
        self.running = np.zeros(num_envs)
        self.finished: list[float] = []

    def update(self, rewards, dones) -> None:
        self.running += rewards
        if np.any(dones):
            self.finished.extend(self.running[dones].tolist())
            self.running[dones] = 0.0

    def mean(self):
        return float(np.mean(self.finished)) if self.finished else None

    def count(self) -> int:
        return len(self.finished)

    def clear(self) -> None:
        self.finished = []


def evaluate(params: NetworkParams, env: VecEnv, seed: int, max_steps: int = 100_000) -> float:
    """Mean return of one greedy episode per environment instance."""
    obs = env.reset(seed)
    returns = np.zeros(env.num_envs)
    active = np.ones(env.num_envs, dtype=bool)
    for _ in range(max_steps):
        a = np.argmax(q_values(params, obs), axis=1)
        obs, r, dones, _ = env.step(a)
        returns += r * active
        active &= ~dones
        if not active.any():
            break
    return float(returns.mean())
