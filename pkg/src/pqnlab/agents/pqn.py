"""Parallelised Q-learning: vectorised rollouts, Q(lambda) targets, no replay, no target network."""
from __future__ import annotations

import time
from typing import Callable

import numpy as np

from ..envs.base import VecEnv
from ..net import NetworkParams, commit_batch_stats, init_params, mlp_specs, q_values
from ..optim import apply_update, clip_global_norm, l2_coeff, l2_final_layer_term, lr_at, make_optimizer, tree_add
from .config import PqnConfig
from .core import epsilon_at, q_lambda_targets, select_actions, td_loss_and_grads
from .evaluate import EpisodeTracker, evaluate

_NORM = {"layer_norm": "layer", "batch_norm": "batch", "none": "none"}


def build_network(cfg, obs_dim: int, num_actions: int, seed, ensemble: int | None = None) -> NetworkParams:
    specs = mlp_specs(obs_dim, num_actions, cfg.hidden_size, cfg.num_layers,
                      norm=_NORM[cfg.norm_type], variant=cfg.norm_variant)
    return init_params(specs, seed=seed, ensemble=ensemble)


def minibatch_partition(rng: np.random.Generator, n: int, num_minibatches: int) -> list[np.ndarray]:
    """Split a random permutation of ``range(n)`` into equal disjoint index blocks."""
    if n % num_minibatches:
        raise ValueError(f"{num_minibatches} minibatches do not divide {n} transitions")
    return np.split(rng.permutation(n), num_minibatches)


def pqn_train(cfg: PqnConfig, env: VecEnv, seed: int, eval_env: VecEnv | None = None,
              log: Callable[[dict], None] | None = None, params: NetworkParams | None = None):
    """Train online on ``env`` and return ``(params, metrics)``.

    Each iteration rolls the epsilon-greedy policy for ``num_steps`` steps in
    all ``num_envs`` environments, computes Q(lambda) targets with the
    current network, then runs ``num_epochs`` passes of ``num_minibatches``
    disjoint random minibatches over the collected transitions.  Only one
    parameter set exists: bootstrap values come from the online network.
    ``log`` receives each metrics record as it is produced; per-iteration
    wall-clock time is reported under ``wall_clock_s``.
    """
    if env.num_envs != cfg.num_envs:
        raise ValueError(f"env has {env.num_envs} instances, config asks for {cfg.num_envs}")
    rng = np.random.default_rng([seed, 1])
    if params is None:
        params = build_network(cfg, env.obs_dim, env.num_actions, np.random.default_rng([seed, 0]))
    opt = make_optimizer(cfg.optimizer, params.weights, cfg.lr)
    reg = l2_coeff(cfg.gamma, cfg.l2_eta) if cfg.l2_eta > 0 else 0.0

    B, T = cfg.num_envs, cfg.num_steps
    total_updates = cfg.num_iterations * cfg.num_epochs * cfg.num_minibatches
    decay_steps = cfg.eps_decay * cfg.total_timesteps

    obs = env.reset(seed)
    q_obs = q_values(params, obs)
    tracker = EpisodeTracker(B)
    global_step = 0
    updates = 0
    metrics: list[dict] = []
    start = time.perf_counter()

    for it in range(cfg.num_iterations):
        states = np.empty((T, B, env.obs_dim))
        actions = np.empty((T, B), dtype=int)
        rewards = np.empty((T, B))
        terms = np.empty((T, B), dtype=bool)
        truncs = np.empty((T, B), dtype=bool)
        max_next = np.empty((T, B))
        eps = epsilon_at(global_step, cfg.eps_start, cfg.eps_finish, decay_steps)
        for t in range(T):
            eps = epsilon_at(global_step, cfg.eps_start, cfg.eps_finish, decay_steps)
            a = select_actions(q_obs, eps, rng)
            next_obs, r, dones, terminal_obs = env.step(a)
            q_next = q_values(params, terminal_obs)
            states[t], actions[t], rewards[t] = obs, a, r
            terms[t], truncs[t] = env.terminated, env.truncated
            max_next[t] = q_next.max(axis=1)
            if dones.any():
                q_next[dones] = q_values(params, next_obs[dones])
            q_obs, obs = q_next, next_obs
            tracker.update(r, dones)
            global_step += B

        targets = q_lambda_targets(rewards, terms, max_next, cfg.gamma, cfg.lam, truncs)
        flat_s = states.reshape(T * B, -1)
        flat_a = actions.reshape(-1)
        flat_y = targets.reshape(-1)
        losses = []
        lr = cfg.lr
        for _ in range(cfg.num_epochs):
            for idx in minibatch_partition(rng, T * B, cfg.num_minibatches):
                loss, grads, cache = td_loss_and_grads(params, flat_s[idx], flat_a[idx], flat_y[idx])
                commit_batch_stats(params, cache)
                if reg:
                    grads = tree_add(grads, l2_final_layer_term(params, reg))
                grads = clip_global_norm(grads, cfg.max_grad_norm)
                lr = lr_at(updates, total_updates, cfg.lr, cfg.lr_linear_decay)
                new_weights, opt = apply_update(opt, params.weights, grads, lr)
                params = params.with_weights(new_weights)
                updates += 1
                losses.append(loss)
        q_obs = q_values(params, obs)

        record = {
            "step": global_step,
            "updates": updates,
            "episodic_return_mean": tracker.mean(),
            "episodic_return_count": tracker.count(),
            "loss": float(np.mean(losses)) if losses else None,
            "epsilon": eps,
            "lr": lr,
        }
        tracker.clear()
        if eval_env is not None and ((it + 1) % cfg.eval_every == 0 or it == cfg.num_iterations - 1):
            record["eval_return"] = evaluate(params, eval_env, seed=int(1_000_003 * (seed + 1) + it))
        record["wall_clock_s"] = time.perf_counter() - start
        metrics.append(record)
        if log is not None:
            log(record)
    return params, metrics
