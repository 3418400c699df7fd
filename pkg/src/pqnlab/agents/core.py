"""Exploration, bootstrap targets and the TD regression loss shared by all agents."""
from __future__ import annotations

import numpy as np

from ..net import NetworkParams, network_backward, network_forward


def epsilon_at(step: int, eps_start: float, eps_finish: float, decay_steps: float) -> float:
    """Linear anneal from ``eps_start`` to ``eps_finish`` over ``decay_steps`` steps."""
    if decay_steps <= 0 or step >= decay_steps:
        return eps_finish
    frac = max(step / decay_steps, 0.0)
    return eps_start + frac * (eps_finish - eps_start)


def select_actions(q_values, epsilon: float, rng: np.random.Generator) -> np.ndarray:
    """Epsilon-greedy per row; greedy ties go to the lowest action index."""
    q_values = np.asarray(q_values)
    n, num_actions = q_values.shape
    greedy = np.argmax(q_values, axis=1)
    explore = rng.random(n) < epsilon
    random_actions = rng.integers(0, num_actions, size=n)
    return np.where(explore, random_actions, greedy)


def one_step_targets(rewards, dones, max_next_q, gamma: float) -> np.ndarray:
    rewards = np.asarray(rewards, dtype=np.float64)
    cont = 1.0 - np.asarray(dones, dtype=np.float64)
    return rewards + gamma * cont * np.asarray(max_next_q, dtype=np.float64)


def q_lambda_targets(rewards, terminals, max_next_q, gamma: float, lam: float,
                     truncations=None) -> np.ndarray:
    """Peng's Q(lambda) returns for time-major ``(T, ...)`` arrays.

    ``max_next_q[t]`` is ``max_a Q(s_{t+1}, a)`` evaluated on the state reached
    at step t (the pre-reset observation when the episode ended there).
    A terminal step returns just its reward.  A step cut by a time limit,
    or the last step of the rollout, bootstraps fully from ``max_next_q``.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    term = np.asarray(terminals, dtype=bool)
    nq = np.asarray(max_next_q, dtype=np.float64)
    trunc = np.zeros_like(term) if truncations is None else np.asarray(truncations, dtype=bool)
    T = rewards.shape[0]
    out = np.empty_like(rewards)
    one_step = rewards + gamma * nq
    out[T - 1] = np.where(term[T - 1], rewards[T - 1], one_step[T - 1])
    for t in range(T - 2, -1, -1):
        mixed = rewards[t] + gamma * (lam * out[t + 1] + (1.0 - lam) * nq[t])
        out[t] = np.where(term[t], rewards[t], np.where(trunc[t], one_step[t], mixed))
    return out


def td_loss_and_grads(params: NetworkParams, states, actions, targets, mode: str = "train"):
    """Mean squared error between constant targets and ``Q(s, a)``.

    With ensemble parameters (leading K axis) ``targets`` has shape
    ``(K, N)`` and the returned loss is the sum of the member losses.
    Returns ``(loss, grads, cache)``; the cache carries BatchNorm batch
    statistics for :func:`pqnlab.net.commit_batch_stats`.
    """
    q, cache = network_forward(params, states, mode)
    actions = np.asarray(actions, dtype=int)
    targets = np.asarray(targets, dtype=q.dtype)
    n = q.shape[-2]
    if actions.shape[-1] != n or targets.shape[-1] != n:
        raise ValueError("states, actions and targets disagree on the batch size")
    qa = np.take_along_axis(q, np.broadcast_to(actions[..., None], q.shape[:-1] + (1,)), axis=-1)[..., 0]
    err = qa - targets
    loss = float(np.sum(np.mean(err * err, axis=-1)))
    upstream = np.zeros_like(q)
    np.put_along_axis(upstream, np.broadcast_to(actions[..., None], q.shape[:-1] + (1,)),
                      (2.0 * err / n)[..., None], axis=-1)
    grads = network_backward(params, cache, upstream)
    return loss, grads, cache
