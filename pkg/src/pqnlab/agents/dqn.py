"""DQN baseline: uniform replay buffer plus a periodically copied target network."""
from __future__ import annotations

import time
from typing import Callable

import numpy as np

from ..envs.base import VecEnv
from ..net import commit_batch_stats, q_values
from ..optim import apply_update, clip_global_norm, make_optimizer
from .config import DqnConfig
from .core import epsilon_at, one_step_targets, select_actions, td_loss_and_grads
from .evaluate import EpisodeTracker, evaluate
from .pqn import build_network


class ReplayBuffer:
    """Fixed-capacity ring buffer; once full, each new transition overwrites the oldest."""

    def __init__(self, capacity: int, obs_dim: int, dtype=np.float64):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.obs = np.zeros((capacity, obs_dim), dtype=dtype)
        self.next_obs = np.zeros((capacity, obs_dim), dtype=dtype)
        self.actions = np.zeros(capacity, dtype=int)
        self.rewards = np.zeros(capacity)
        self.terminals = np.zeros(capacity, dtype=bool)
        self.pos = 0
        self.size = 0

    def add(self, obs, actions, rewards, next_obs, terminals) -> None:
        obs = np.atleast_2d(obs)
        n = obs.shape[0]
        idx = (self.pos + np.arange(n)) % self.capacity
        self.obs[idx] = obs
        self.next_obs[idx] = np.atleast_2d(next_obs)
        self.actions[idx] = actions
        self.rewards[idx] = rewards
        self.terminals[idx] = terminals
        self.pos = int((self.pos + n) % self.capacity)
        self.size = min(self.size + n, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        if self.size < batch_size:
            raise ValueError(f"buffer holds {self.size} transitions, cannot sample {batch_size}")
        idx = rng.integers(0, self.size, size=batch_size)
        return self.obs[idx], self.actions[idx], self.rewards[idx], self.next_obs[idx], self.terminals[idx]


def dqn_train(cfg: DqnConfig, env: VecEnv, seed: int, eval_env: VecEnv | None = None,
              log: Callable[[dict], None] | None = None):
    """Classic DQN loop; returns ``(params, metrics)`` with one record per ``eval_every`` env steps."""
    rng = np.random.default_rng([seed, 1])
    params = build_network(cfg, env.obs_dim, env.num_actions, np.random.default_rng([seed, 0]))
    target = params.copy()
    opt = make_optimizer(cfg.optimizer, params.weights, cfg.lr)
    buf = ReplayBuffer(cfg.buffer_size, env.obs_dim)
    B = env.num_envs
    decay_steps = cfg.eps_decay * cfg.total_timesteps
    tracker = EpisodeTracker(B)
    obs = env.reset(seed)
    global_step = 0
    vec_step = 0
    updates = 0
    losses: list[float] = []
    metrics: list[dict] = []
    next_log = cfg.eval_every
    eps = cfg.eps_start
    start = time.perf_counter()
    while global_step < cfg.total_timesteps:
        eps = epsilon_at(global_step, cfg.eps_start, cfg.eps_finish, decay_steps)
        a = select_actions(q_values(params, obs), eps, rng)
        next_obs, r, dones, terminal_obs = env.step(a)
        buf.add(obs, a, r, terminal_obs, env.terminated)
        tracker.update(r, dones)
        obs = next_obs
        global_step += B
        vec_step += 1
        if global_step > cfg.learning_starts and vec_step % cfg.train_frequency == 0:
            s, act, rew, s2, term = buf.sample(cfg.batch_size, rng)
            y = one_step_targets(rew, term, q_values(target, s2).max(axis=1), cfg.gamma)
            loss, grads, cache = td_loss_and_grads(params, s, act, y)
            commit_batch_stats(params, cache)
            grads = clip_global_norm(grads, cfg.max_grad_norm)
            new_weights, opt = apply_update(opt, params.weights, grads)
            params = params.with_weights(new_weights)
            updates += 1
            losses.append(loss)
        if vec_step % cfg.target_update_period == 0:
            target = params.copy()
        if global_step >= next_log or global_step >= cfg.total_timesteps:
            next_log += cfg.eval_every
            record = {
                "step": global_step,
                "updates": updates,
                "episodic_return_mean": tracker.mean(),
                "episodic_return_count": tracker.count(),
                "loss": float(np.mean(losses)) if losses else None,
                "epsilon": eps,
                "lr": cfg.lr,
            }
            tracker.clear()
            losses = []
            if eval_env is not None:
                record["eval_return"] = evaluate(params, eval_env, seed=int(1_000_003 * (seed + 1) + global_step))
            record["wall_clock_s"] = time.perf_counter() - start
            metrics.append(record)
            if log is not None:
                log(record)
    return params, metrics
