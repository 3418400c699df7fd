"""Baird's seven-state star counterexample."""
from __future__ import annotations

import numpy as np

from .tabular import SamplingDistribution, TabularMDP, TabularVecEnv

DASHED, SOLID = 0, 1
NUM_STATES = 7

# v(s_i) = 2 w_i + w_8 for the six upper states, v(s_7) = w_7 + 2 w_8
FEATURES = np.array([
    [2, 0, 0, 0, 0, 0, 0, 1],
    [0, 2, 0, 0, 0, 0, 0, 1],
    [0, 0, 2, 0, 0, 0, 0, 1],
    [0, 0, 0, 2, 0, 0, 0, 1],
    [0, 0, 0, 0, 2, 0, 0, 1],
    [0, 0, 0, 0, 0, 2, 0, 1],
    [0, 0, 0, 0, 0, 0, 1, 2],
], dtype=np.float64)

INITIAL_WEIGHTS = np.array([1, 1, 1, 1, 1, 1, 10, 1], dtype=np.float64)


def baird_build(gamma: float = 0.99):
    """Return ``(mdp, sampling, features)``.

    Solid always leads to the seventh state, dashed to one of the first six
    uniformly.  The behaviour policy picks dashed with probability 6/7, the
    target policy always picks solid, every reward is zero and states are
    sampled uniformly.
    """
    S = NUM_STATES
    P = np.zeros((S, 2, S))
    P[:, DASHED, :6] = 1.0 / 6.0
    P[:, SOLID, 6] = 1.0
    R = np.zeros((S, 2))
    mu = np.tile([6.0 / 7.0, 1.0 / 7.0], (S, 1))
    pi = np.tile([0.0, 1.0], (S, 1))
    mdp = TabularMDP(P, R, gamma, P0=np.full(S, 1.0 / S), features=FEATURES.copy(), r_max=1.0)
    sampling = SamplingDistribution.from_state_dist(np.full(S, 1.0 / S), mu, pi)
    return mdp, sampling, FEATURES.copy()


class BairdVecEnv(TabularVecEnv):
    """Continuing Baird chain; episodes are cut after ``max_steps`` steps."""

    def __init__(self, num_envs: int = 1, max_steps: int | None = 100, gamma: float = 0.99,
                 instance_offset: int = 0):
        mdp, self.sampling, _ = baird_build(gamma)
        super().__init__(mdp, num_envs, max_steps, instance_offset)
