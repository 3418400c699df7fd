"""Finite MDPs: container, text-file format, value iteration and a vectorised wrapper."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .base import VecEnv


@dataclass
class TabularMDP:
    """``P[s, a, s']`` transition tensor, ``R[s, a]`` expected rewards, ``P0`` and ``gamma``.

    ``features`` optionally maps each state to an observation row; the
    default is a one-hot encoding.  ``terminal`` marks absorbing states that
    end an episode when entered.
    """

    P: np.ndarray
    R: np.ndarray
    gamma: float
    P0: np.ndarray | None = None
    features: np.ndarray | None = None
    terminal: np.ndarray | None = None
    r_max: float | None = None

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=np.float64)
        self.R = np.asarray(self.R, dtype=np.float64)
        S, A = self.R.shape
        if self.P.shape != (S, A, S):
            raise ValueError(f"P has shape {self.P.shape}, expected {(S, A, S)}")
        if np.any(self.P < 0) or np.max(np.abs(self.P.sum(-1) - 1)) > 1e-12:
            raise ValueError("transition rows must be probability vectors")
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must lie in [0, 1]")
        if self.P0 is None:
            self.P0 = np.full(S, 1.0 / S)
        self.P0 = np.asarray(self.P0, dtype=np.float64)
        if self.features is None:
            self.features = np.eye(S)
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.shape[0] != S:
            raise ValueError("feature map needs one row per state")
        if self.terminal is None:
            self.terminal = np.zeros(S, dtype=bool)
        if self.r_max is None:
            self.r_max = float(np.max(np.abs(self.R))) if self.R.size else 0.0
        if np.max(np.abs(self.R)) > self.r_max + 1e-12:
            raise ValueError("rewards exceed r_max")

    @property
    def num_states(self) -> int:
        return self.R.shape[0]

    @property
    def num_actions(self) -> int:
        return self.R.shape[1]


@dataclass
class SamplingDistribution:
    """State-action weights ``d[s, a]`` with behaviour policy ``mu`` and target policy ``pi``."""

    d: np.ndarray
    mu: np.ndarray
    pi: np.ndarray

    def __post_init__(self):
        for name in ("d", "mu", "pi"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if np.any(arr < 0):
                raise ValueError(f"{name} has negative entries")
            setattr(self, name, arr)
        if abs(self.d.sum() - 1) > 1e-12:
            raise ValueError("d must sum to one")
        for name in ("mu", "pi"):
            if np.max(np.abs(getattr(self, name).sum(-1) - 1)) > 1e-12:
                raise ValueError(f"{name} rows must sum to one")

    @classmethod
    def from_state_dist(cls, state_dist, mu, pi) -> "SamplingDistribution":
        mu = np.asarray(mu, dtype=np.float64)
        return cls(np.asarray(state_dist)[:, None] * mu, mu, pi)


def bellman_optimal(mdp: TabularMDP, Q: np.ndarray) -> np.ndarray:
    cont = (~mdp.terminal).astype(np.float64)
    return mdp.R + mdp.gamma * mdp.P @ (cont * Q.max(axis=1))


def value_iteration(mdp: TabularMDP, tol: float = 1e-10, max_iter: int = 1_000_000) -> np.ndarray:
    """Iterate the optimal Bellman operator until one more application moves Q by less than ``tol``.

    Entering a terminal state ends the episode, so its value is not bootstrapped.
    """
    if mdp.gamma >= 1 and not mdp.terminal.any():
        raise ValueError("value iteration needs gamma < 1 or absorbing terminal states")
    Q = np.zeros_like(mdp.R)
    for _ in range(max_iter):
        Q_new = bellman_optimal(mdp, Q)
        if np.max(np.abs(bellman_optimal(mdp, Q_new) - Q_new)) < tol:
            return Q_new
        Q = Q_new
    raise RuntimeError("value iteration did not converge")


def policy_q(mdp: TabularMDP, pi: np.ndarray) -> np.ndarray:
    """Exact action values of a stationary policy by solving the linear Bellman system."""
    S, A = mdp.R.shape
    cont = (~mdp.terminal).astype(np.float64)
    # Q = R + gamma * P (cont * pi Q)
    Ppi = (mdp.P.reshape(S * A, S) * cont) @ _policy_matrix(pi)
    return np.linalg.solve(np.eye(S * A) - mdp.gamma * Ppi, mdp.R.reshape(-1)).reshape(S, A)


def _policy_matrix(pi):
    S, A = pi.shape
    M = np.zeros((S, S * A))
    for s in range(S):
        M[s, s * A:(s + 1) * A] = pi[s]
    return M


# ------------------------------------------------------------------ file io

FORMAT_DOC = """\
Plain-text MDP format ('#' starts a comment, blank lines ignored):
  line 1            : S A
  next S*A lines    : P[s, a, 0..S-1], ordered s = 0..S-1 outer, a = 0..A-1 inner
  next S lines      : R[s, 0..A-1]
  optional lines    : 'gamma <value>' and 'init <S probabilities>'
"""


def load_mdp(path: str | Path, gamma: float = 0.99) -> TabularMDP:
    rows = []
    extra = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head = line.split()[0]
        if head in ("gamma", "init"):
            extra[head] = [float(t) for t in line.split()[1:]]
        else:
            rows.append([float(t) for t in line.split()])
    if not rows or len(rows[0]) != 2:
        raise ValueError("first line must hold 'S A'")
    S, A = int(rows[0][0]), int(rows[0][1])
    body = rows[1:]
    if len(body) != S * A + S:
        raise ValueError(f"expected {S * A} transition rows and {S} reward rows, got {len(body)} rows")
    P = np.array(body[:S * A]).reshape(S, A, S)
    R = np.array(body[S * A:])
    if R.shape != (S, A):
        raise ValueError("reward rows must have A entries each")
    g = extra.get("gamma", [gamma])[0]
    P0 = np.array(extra["init"]) if "init" in extra else None
    return TabularMDP(P, R, g, P0)


def save_mdp(mdp: TabularMDP, path: str | Path) -> None:
    S, A = mdp.R.shape
    lines = [f"{S} {A}"]
    lines += [" ".join(repr(float(p)) for p in mdp.P[s, a]) for s in range(S) for a in range(A)]
    lines += [" ".join(repr(float(r)) for r in mdp.R[s]) for s in range(S)]
    lines.append(f"gamma {mdp.gamma!r}")
    lines.append("init " + " ".join(repr(float(p)) for p in mdp.P0))
    Path(path).write_text("\n".join(lines) + "\n")


def random_mdp(num_states: int, num_actions: int, gamma: float, seed: int = 0, r_max: float = 1.0) -> TabularMDP:
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(num_states), size=(num_states, num_actions))
    R = rng.uniform(-r_max, r_max, size=(num_states, num_actions))
    return TabularMDP(P, R, gamma, r_max=r_max)


class TabularVecEnv(VecEnv):
    """Vectorised sampler for a :class:`TabularMDP`; observations are feature rows."""

    def __init__(self, mdp: TabularMDP, num_envs: int = 1, max_steps: int | None = 100,
                 instance_offset: int = 0):
        super().__init__(num_envs, instance_offset)
        self.mdp = mdp
        self.obs_dim = mdp.features.shape[1]
        self.num_actions = mdp.num_actions
        self.r_max = mdp.r_max
        self.max_steps = max_steps
        self.state = np.zeros(num_envs, dtype=int)
        self.t = np.zeros(num_envs, dtype=int)
        self._cdf = np.cumsum(mdp.P, axis=-1)
        self._cdf0 = np.cumsum(mdp.P0)

    def _reset_instances(self, idx):
        for i in idx:
            self.state[i] = _draw(self._cdf0, self.rngs[i])
            self.t[i] = 0

    def _transition(self, actions):
        rewards = self.mdp.R[self.state, actions].copy()
        for i in range(self.num_envs):
            self.state[i] = _draw(self._cdf[self.state[i], actions[i]], self.rngs[i])
        self.t += 1
        terminated = self.mdp.terminal[self.state].copy()
        if self.max_steps is None:
            truncated = np.zeros(self.num_envs, dtype=bool)
        else:
            truncated = self.t >= self.max_steps
        return rewards, terminated, truncated

    def _observe(self, idx):
        return self.mdp.features[self.state[idx]].copy()


def _draw(cdf, rng) -> int:
    return int(min(np.searchsorted(cdf, rng.random(), side="right"), cdf.shape[0] - 1))
