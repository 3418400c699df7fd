"""DeepSea: an N x N exploration grid with a single distant reward (bsuite dynamics)."""
from __future__ import annotations

import numpy as np

from .base import VecEnv
from .tabular import TabularMDP

LEFT, RIGHT = 0, 1


class DeepSea(VecEnv):
    """Agent starts top-left and descends one row per step.

    Moving right costs ``0.01 / N``; moving right while in the last column
    pays +1.  Episodes last exactly N steps, so the best return is 0.99.
    Observations are the flattened one-hot grid (``obs='grid'``) or a row
    one-hot concatenated with a column one-hot (``obs='coords'``).
    """

    def __init__(self, size: int, num_envs: int = 1, randomize_actions: bool = False,
                 obs: str = "grid", move_cost: float = 0.01, instance_offset: int = 0):
        super().__init__(num_envs, instance_offset)
        if size < 1:
            raise ValueError("size must be positive")
        if obs not in ("grid", "coords"):
            raise ValueError(f"unknown observation mode {obs!r}")
        self.size = int(size)
        self.obs_mode = obs
        self.obs_dim = self.size * self.size if obs == "grid" else 2 * self.size
        self.num_actions = 2
        self.move_cost = move_cost
        self.r_max = 1.0 + move_cost
        self.randomize_actions = randomize_actions
        self.row = np.zeros(num_envs, dtype=int)
        self.col = np.zeros(num_envs, dtype=int)
        self.flip = np.zeros((num_envs, self.size, self.size), dtype=bool)

    def reset(self, seed: int = 0) -> np.ndarray:
        obs = super().reset(seed)
        if self.randomize_actions:
            for i, rng in enumerate(self.rngs):
                self.flip[i] = rng.random((self.size, self.size)) < 0.5
        return obs

    def _reset_instances(self, idx):
        self.row[idx] = 0
        self.col[idx] = 0

    def right_mask(self, actions):
        ar = np.arange(self.num_envs)
        row = np.minimum(self.row, self.size - 1)
        return (actions == RIGHT) ^ self.flip[ar, row, self.col]

    def _transition(self, actions):
        right = self.right_mask(actions)
        N = self.size
        rewards = np.where(right & (self.col == N - 1), 1.0, 0.0)
        rewards = rewards - np.where(right, self.move_cost / N, 0.0)
        self.col = np.clip(np.where(right, self.col + 1, self.col - 1), 0, N - 1)
        self.row = self.row + 1
        terminated = self.row >= N
        return rewards, terminated, np.zeros(self.num_envs, dtype=bool)

    def _observe(self, idx):
        idx = np.asarray(idx)
        out = np.zeros((idx.size, self.obs_dim))
        live = self.row[idx] < self.size
        rows, cols = self.row[idx][live], self.col[idx][live]
        if self.obs_mode == "grid":
            out[np.flatnonzero(live), rows * self.size + cols] = 1.0
        else:
            out[np.flatnonzero(live), rows] = 1.0
            out[np.flatnonzero(live), self.size + cols] = 1.0
        return out


def deepsea_mdp(size: int, gamma: float = 0.99, move_cost: float = 0.01) -> TabularMDP:
    """Tabular twin of the deterministic grid: state ``row * N + col`` plus one terminal state."""
    N = size
    S = N * N + 1
    end = N * N
    P = np.zeros((S, 2, S))
    R = np.zeros((S, 2))
    for r in range(N):
        for c in range(N):
            s = r * N + c
            for a in (LEFT, RIGHT):
                nc = min(c + 1, N - 1) if a == RIGHT else max(c - 1, 0)
                R[s, a] = (1.0 if (a == RIGHT and c == N - 1) else 0.0) - (move_cost / N if a == RIGHT else 0.0)
                P[s, a, end if r + 1 >= N else (r + 1) * N + nc] = 1.0
    P[end, :, end] = 1.0
    terminal = np.zeros(S, dtype=bool)
    terminal[end] = True
    P0 = np.zeros(S)
    P0[0] = 1.0
    return TabularMDP(P, R, gamma, P0=P0, terminal=terminal, r_max=1.0 + move_cost)
