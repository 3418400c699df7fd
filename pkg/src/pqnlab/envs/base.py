"""Synchronous vectorised environment contract with auto-reset."""
from __future__ import annotations

import numpy as np


def instance_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream owned by one environment instance."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


class VecEnv:
    """``num_envs`` independent copies of one environment stepped in lockstep.

    Subclasses implement ``_reset_instances(idx)`` (write fresh states for the
    given instance indices) plus ``_transition(actions)`` returning
    ``(rewards, terminated, truncated)`` after mutating the state, and
    ``_observe(idx)``.  Instance ``i`` draws randomness only from its own
    stream keyed on ``(seed, instance_offset + i)``, so a vectorised run
    matches ``num_envs`` single-instance runs exactly.
    """

    obs_dim: int
    num_actions: int
    r_max: float = 1.0

    def __init__(self, num_envs: int = 1, instance_offset: int = 0):
        if num_envs < 1:
            raise ValueError("num_envs must be at least 1")
        self.num_envs = int(num_envs)
        self.instance_offset = int(instance_offset)
        self.rngs: list[np.random.Generator] = []
        self.truncated = np.zeros(self.num_envs, dtype=bool)
        self.terminated = np.zeros(self.num_envs, dtype=bool)

    def reset(self, seed: int = 0) -> np.ndarray:
        self.rngs = [instance_rng(seed, self.instance_offset + i) for i in range(self.num_envs)]
        idx = np.arange(self.num_envs)
        self._reset_instances(idx)
        return self._observe(idx)

    def step(self, actions):
        """Advance every instance by one step.

        Returns ``(next_obs, rewards, dones, terminal_obs)``.  Finished
        instances are reset immediately; their row in ``next_obs`` is the
        fresh initial observation while ``terminal_obs`` keeps the final one.
        ``self.truncated`` flags dones caused only by a time limit.
        """
        actions = np.asarray(actions).astype(int).reshape(-1)
        if actions.shape[0] != self.num_envs:
            raise ValueError(f"expected {self.num_envs} actions, got {actions.shape[0]}")
        if actions.min() < 0 or actions.max() >= self.num_actions:
            raise ValueError(f"actions must lie in [0, {self.num_actions})")
        rewards, terminated, truncated = self._transition(actions)
        all_idx = np.arange(self.num_envs)
        terminal_obs = self._observe(all_idx)
        dones = terminated | truncated
        self.terminated = terminated
        self.truncated = truncated & ~terminated
        next_obs = terminal_obs.copy()
        done_idx = np.flatnonzero(dones)
        if done_idx.size:
            self._reset_instances(done_idx)
            next_obs[done_idx] = self._observe(done_idx)
        return next_obs, rewards.astype(np.float64), dones, terminal_obs

    # subclass hooks
    def _reset_instances(self, idx: np.ndarray) -> None:
        raise NotImplementedError

    def _transition(self, actions: np.ndarray):
        raise NotImplementedError

    def _observe(self, idx: np.ndarray) -> np.ndarray:
        raise NotImplementedError
