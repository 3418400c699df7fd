"""Bootstrapped ensemble of Q-networks trained from one shared transition stream."""
from __future__ import annotations

import time
from collections import deque
from typing import Callable

import numpy as np

from ..envs.base import VecEnv
from ..net import NetworkParams, commit_batch_stats, init_params, mlp_specs, q_values
from ..optim import apply_update, make_optimizer
from .config import EnsembleConfig
from .core import one_step_targets, select_actions, td_loss_and_grads
from .dqn import ReplayBuffer
from .pqn import build_network


def clip_per_member(grads, max_norm: float):
    """Global-norm clipping applied to each ensemble member (leading axis) separately."""
    if not np.isfinite(max_norm):
        return grads
    sq = sum(np.sum(g * g, axis=tuple(range(1, g.ndim))) for layer in grads for g in layer.values())
    scale = np.minimum(1.0, max_norm / np.maximum(np.sqrt(sq), 1e-300))
    return [{k: g * scale.reshape((-1,) + (1,) * (g.ndim - 1)) for k, g in layer.items()} for layer in grads]


def build_ensemble(cfg: EnsembleConfig, obs_dim: int, num_actions: int, seed) -> NetworkParams:
    rng = np.random.default_rng([seed, 0])
    K = cfg.ensemble_size
    if not cfg.identical_init:
        return build_network(cfg, obs_dim, num_actions, rng, ensemble=K)
    single = build_network(cfg, obs_dim, num_actions, rng)
    stacked = single.copy()
    stacked.weights = [{k: np.repeat(v[None], K, axis=0) for k, v in layer.items()} for layer in single.weights]
    stacked.stats = [{k: np.repeat(v[None], K, axis=0) for k, v in layer.items()} for layer in single.stats]
    return stacked


def build_priors(cfg: EnsembleConfig, obs_dim: int, num_actions: int, seed) -> NetworkParams | None:
    """Fixed random un-normalised MLPs, one per member, or None when ``prior_scale`` is 0."""
    if cfg.prior_scale == 0:
        return None
    specs = mlp_specs(obs_dim, num_actions, cfg.hidden_size, cfg.num_layers, norm="none")
    return init_params(specs, seed=np.random.default_rng([seed, 2]), ensemble=cfg.ensemble_size)


def ensemble_train(cfg: EnsembleConfig, env: VecEnv, seed: int,
                   log: Callable[[dict], None] | None = None, log_every: int = 500,
                   params: NetworkParams | None = None):
    """Train ``ensemble_size`` Q-networks side by side; returns ``(params, metrics)``.

    Every episode is driven greedily by one member drawn uniformly at random.
    All members learn from the same replay minibatches, each bootstrapping
    from its own predictions, with no target network.  The final metrics
    record reports ``solved_episode``: the first episode count at which the
    mean return over the trailing ``solve_window`` episodes exceeded
    ``solve_threshold`` (None if never).

    With ``prior_scale > 0`` each member's value is its trainable network
    plus ``prior_scale`` times a fixed random prior network.  The prior is
    never trained, so the regression target of the trainable part is the
    TD target minus the prior's prediction.
    """
    rng = np.random.default_rng([seed, 1])
    K, B = cfg.ensemble_size, env.num_envs
    if params is None:
        params = build_ensemble(cfg, env.obs_dim, env.num_actions, seed)
    priors = build_priors(cfg, env.obs_dim, env.num_actions, seed)

    def prior_q(x):
        return 0.0 if priors is None else cfg.prior_scale * q_values(priors, x)

    opt = make_optimizer(cfg.optimizer, params.weights, cfg.lr)
    buf = ReplayBuffer(cfg.buffer_size, env.obs_dim)
    obs = env.reset(seed)
    member = rng.integers(0, K, size=B)
    running = np.zeros(B)
    window: deque[float] = deque(maxlen=cfg.solve_window)
    episodes = 0
    env_steps = 0
    updates = 0
    solved_episode = None
    losses: list[float] = []
    recent: list[float] = []
    metrics: list[dict] = []
    next_log = log_every
    start = time.perf_counter()
    arange = np.arange(B)

    def emit(final=False):
        rec = {
            "step": env_steps,
            "episode": episodes,
            "updates": updates,
            "episodic_return_mean": float(np.mean(recent)) if recent else None,
            "episodic_return_count": len(recent),
            "trailing_return_mean": float(np.mean(window)) if window else None,
            "loss": float(np.mean(losses)) if losses else None,
            "epsilon": cfg.epsilon,
            "lr": cfg.lr,
        }
        if final:
            rec["solved_episode"] = solved_episode
        rec["wall_clock_s"] = time.perf_counter() - start
        metrics.append(rec)
        if log is not None:
            log(rec)

    while episodes < cfg.max_episodes:
        q = q_values(params, obs) + prior_q(obs)
        if q.ndim == 2:
            q = q[None]
        a = select_actions(q[member, arange], cfg.epsilon, rng)
        next_obs, r, dones, terminal_obs = env.step(a)
        buf.add(obs, a, r, terminal_obs, env.terminated)
        running += r
        env_steps += B
        obs = next_obs
        if dones.any():
            done_idx = np.flatnonzero(dones)
            for i in done_idx:
                window.append(float(running[i]))
                recent.append(float(running[i]))
                episodes += 1
                if (solved_episode is None and len(window) == cfg.solve_window
                        and np.mean(window) > cfg.solve_threshold):
                    solved_episode = episodes
            running[done_idx] = 0.0
            member[done_idx] = rng.integers(0, K, size=done_idx.size)
        if buf.size >= max(cfg.learning_starts, cfg.batch_size):
            for _ in range(cfg.updates_per_step):
                s, act, rew, s2, term = buf.sample(cfg.batch_size, rng)
                q_next = q_values(params, s2) + prior_q(s2)
                y = one_step_targets(rew, term, q_next.max(axis=-1), cfg.gamma)
                if priors is not None:
                    y = y - np.take_along_axis(prior_q(s), act[None, :, None], axis=-1)[..., 0]
                loss, grads, cache = td_loss_and_grads(params, s, act, y)
                commit_batch_stats(params, cache)
                grads = clip_per_member(grads, cfg.max_grad_norm) if K > 1 or q.ndim == 3 else grads
                new_weights, opt = apply_update(opt, params.weights, grads)
                params = params.with_weights(new_weights)
                updates += 1
                losses.append(loss)
        finished = episodes >= cfg.max_episodes or (solved_episode is not None and cfg.stop_when_solved)
        if finished:
            break
        if episodes >= next_log:
            next_log += log_every
            emit()
            recent, losses = [], []
    emit(final=True)
    return params, metrics
