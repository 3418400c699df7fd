import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import mixture_oracle, random_trajectory

from pqnlab.agents import (DqnConfig, EnsembleConfig, PqnConfig, ReplayBuffer, dqn_train, ensemble_train, epsilon_at,
                           minibatch_partition, one_step_targets, pqn_train, q_lambda_targets, select_actions,
                           td_loss_and_grads)
from pqnlab.agents.ensemble import build_ensemble, build_priors
from pqnlab.envs import CartPole, DeepSea
from pqnlab.net import LayerSpec, gradient_vector, init_params, mlp_specs, network_forward, unflatten

# -------------------------------------------------------------- exploration


def test_epsilon_schedule():
    assert epsilon_at(0, 1.0, 0.05, 100) == 1.0
    assert epsilon_at(100, 1.0, 0.05, 100) == 0.05
    assert epsilon_at(10**6, 1.0, 0.05, 100) == 0.05
    assert epsilon_at(50, 1.0, 0.0, 100) == 0.5


def test_select_actions_greedy_and_ties():
    rng = np.random.default_rng(0)
    q = rng.standard_normal((50, 4))
    assert np.array_equal(select_actions(q, 0.0, rng), q.argmax(1))
    assert select_actions(np.array([[1.0, 1.0, 0.0]]), 0.0, rng)[0] == 0


def test_select_actions_uniform_when_eps_one():
    n, A = 100_000, 4
    a = select_actions(np.tile([5.0, 0, 0, 0], (n, 1)), 1.0, np.random.default_rng(1))
    counts = np.bincount(a, minlength=A)
    sigma = np.sqrt(n * (1 / A) * (1 - 1 / A))
    assert np.all(np.abs(counts - n / A) < 3 * sigma)


# ------------------------------------------------------------------ targets


def test_one_step_examples():
    assert one_step_targets([1.0], [True], [5.0], 0.9)[0] == 1.0
    assert one_step_targets([0.0], [False], [10.0], 0.9)[0] == 9.0
    r = np.array([0.3, -1.0])
    assert np.array_equal(one_step_targets(r, [False, False], [4.0, 2.0], 0.0), r)


def test_q_lambda_hand_trajectory():
    r = np.array([[1.0], [0.5], [2.0]])
    nq = np.array([[3.0], [-1.0], [4.0]])
    no = np.zeros((3, 1), dtype=bool)
    got = q_lambda_targets(r, no, nq, 0.99, 0.65, no)
    assert np.allclose(got[:, 0], mixture_oracle(r[:, 0], no[:, 0], no[:, 0], nq[:, 0], 0.99, 0.65), atol=1e-10)


def test_q_lambda_terminal_returns_reward():
    r = np.array([[1.0], [7.0]])
    term = np.array([[True], [False]])
    got = q_lambda_targets(r, term, np.array([[100.0], [3.0]]), 0.99, 0.3)
    assert got[0, 0] == 1.0


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**31), T=st.integers(1, 10), lam=st.floats(0, 1), gamma=st.floats(0, 0.999))
def test_q_lambda_matches_mixture_oracle(seed, T, lam, gamma):
    r, term, trunc, nq = random_trajectory(np.random.default_rng(seed), T)
    got = q_lambda_targets(r, term, nq, gamma, lam, trunc)
    for b in range(r.shape[1]):
        ref = mixture_oracle(r[:, b], term[:, b], trunc[:, b], nq[:, b], gamma, lam)
        assert np.allclose(got[:, b], ref, atol=1e-10, rtol=0)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), T=st.integers(1, 10))
def test_q_lambda_zero_is_one_step(seed, T):
    r, term, trunc, nq = random_trajectory(np.random.default_rng(seed), T)
    got = q_lambda_targets(r, term, nq, 0.99, 0.0, trunc)
    assert np.array_equal(got, one_step_targets(r, term, nq, 0.99))


def test_q_lambda_one_is_monte_carlo():
    r = np.array([[1.0], [2.0], [3.0], [9.0]])
    term = np.array([[False], [False], [True], [False]])
    got = q_lambda_targets(r, term, np.full((4, 1), 50.0), 0.9, 1.0)
    assert got[0, 0] == pytest.approx(1 + 0.9 * 2 + 0.81 * 3, abs=1e-12)
    assert got[1, 0] == pytest.approx(2 + 0.9 * 3, abs=1e-12)


# --------------------------------------------------------------------- loss


def test_td_loss_fixed_point_and_linear_case():
    p = init_params(mlp_specs(3, 2, 5, 1), seed=0)
    X = np.random.default_rng(0).standard_normal((4, 3))
    a = np.array([0, 1, 1, 0])
    q = network_forward(p, X)[0][np.arange(4), a]
    loss, grads, _ = td_loss_and_grads(p, X, a, q, mode="eval")
    assert loss == 0 and np.all(gradient_vector(grads) == 0)
    lin = init_params([LayerSpec("dense", 2, 1, bias=False)], seed=1)
    x = np.array([[0.5, -2.0]])
    qv = float(network_forward(lin, x)[0][0, 0])
    _, g, _ = td_loss_and_grads(lin, x, [0], [1.0])
    assert np.allclose(g[0]["W"][0], 2 * (qv - 1.0) * x[0])
    with pytest.raises(ValueError):
        td_loss_and_grads(lin, x, [0, 0], [1.0])


def test_td_loss_finite_differences():
    p = init_params(mlp_specs(3, 2, 6, 2, norm="layer", variant="affine"), seed=2)
    rng = np.random.default_rng(3)
    X, a, y = rng.standard_normal((8, 3)), rng.integers(0, 2, 8), rng.standard_normal(8)
    _, grads, _ = td_loss_and_grads(p, X, a, y)
    flat, g = gradient_vector(p), gradient_vector(grads)
    h = 1e-5
    for j in range(flat.size):
        e = np.zeros_like(flat)
        e[j] = h
        lp = td_loss_and_grads(p.with_weights(unflatten(flat + e, p)), X, a, y)[0]
        lm = td_loss_and_grads(p.with_weights(unflatten(flat - e, p)), X, a, y)[0]
        num = (lp - lm) / (2 * h)
        assert abs(num - g[j]) <= 1e-4 * max(abs(num), 1e-3)


# ---------------------------------------------------------------------- pqn


def small_pqn(**over):
    base = dict(num_envs=4, num_steps=8, total_timesteps=4 * 8 * 3, num_epochs=2, num_minibatches=4,
                hidden_size=16, num_layers=1, eval_every=2, eval_episodes=2)
    base.update(over)
    return PqnConfig(**base)


def test_minibatch_partition_covers_each_index_once():
    parts = minibatch_partition(np.random.default_rng(0), 64, 8)
    assert len(parts) == 8 and all(len(p) == 8 for p in parts)
    assert np.array_equal(np.sort(np.concatenate(parts)), np.arange(64))
    with pytest.raises(ValueError):
        minibatch_partition(np.random.default_rng(0), 10, 3)


def test_pqn_one_iteration_update_count():
    cfg = small_pqn(total_timesteps=32)
    _, metrics = pqn_train(cfg, CartPole(4), seed=0)
    assert len(metrics) == 1 and metrics[0]["updates"] == cfg.num_epochs * cfg.num_minibatches


def test_pqn_zero_lr_keeps_params():
    cfg = small_pqn(lr=0.0)
    init = pqn_train(small_pqn(total_timesteps=32, lr=0.0), CartPole(4), seed=1)[0]
    params, _ = pqn_train(cfg, CartPole(4), seed=1)
    assert np.array_equal(gradient_vector(params), gradient_vector(init))


@pytest.mark.parametrize("norm", ["layer_norm", "batch_norm", "none"])
def test_pqn_metrics_deterministic(norm):
    cfg = small_pqn(norm_type=norm, l2_eta=1.0)
    runs = [pqn_train(cfg, CartPole(4), seed=5, eval_env=CartPole(2)) for _ in range(2)]
    strip = [[{k: v for k, v in m.items() if k != "wall_clock_s"} for m in r[1]] for r in runs]
    assert strip[0] == strip[1]
    assert np.array_equal(gradient_vector(runs[0][0]), gradient_vector(runs[1][0]))
    assert {"step", "episodic_return_mean", "episodic_return_count", "loss", "epsilon", "lr",
            "wall_clock_s"} <= set(runs[0][1][0])


def test_pqn_config_validation():
    with pytest.raises(ValueError, match="num_minibatches=3"):
        PqnConfig(num_envs=4, num_steps=4, num_minibatches=3)
    with pytest.raises(ValueError):
        PqnConfig(lam=1.5)
    with pytest.raises(ValueError):
        pqn_train(small_pqn(), CartPole(3), seed=0)


# ---------------------------------------------------------------------- dqn


def test_replay_buffer_fifo_eviction():
    buf = ReplayBuffer(3, 1)
    for i in range(4):
        buf.add([[float(i)]], [0], [float(i)], [[0.0]], [False])
    assert buf.size == 3 and sorted(buf.rewards.tolist()) == [1.0, 2.0, 3.0]
    with pytest.raises(ValueError):
        buf.sample(4, np.random.default_rng(0))


def test_dqn_config_errors():
    with pytest.raises(ValueError):
        DqnConfig(buffer_size=10, batch_size=32)


def test_dqn_runs_and_is_deterministic():
    cfg = DqnConfig(total_timesteps=600, buffer_size=200, batch_size=32, learning_starts=100,
                    train_frequency=2, target_update_period=1, hidden_size=16, num_layers=1, eval_every=200)
    a = dqn_train(cfg, CartPole(1), seed=0)
    b = dqn_train(cfg, CartPole(1), seed=0)
    assert np.array_equal(gradient_vector(a[0]), gradient_vector(b[0]))
    assert [m["step"] for m in a[1]] == [200, 400, 600]
    assert a[1][-1]["updates"] == (600 - 100) // 2


# ----------------------------------------------------------------- ensemble


def small_ensemble(**over):
    base = dict(ensemble_size=3, num_envs=2, max_episodes=40, buffer_size=256, batch_size=16,
                learning_starts=16, hidden_size=8, solve_window=10)
    base.update(over)
    return EnsembleConfig(**base)


def test_identical_members_stay_identical():
    cfg = small_ensemble(identical_init=True, prior_scale=0.0)
    params, _ = ensemble_train(cfg, DeepSea(4, 2), seed=0)
    for layer in params.weights:
        for v in layer.values():
            assert all(np.array_equal(v[0], v[k]) for k in range(1, 3))


def test_priors_are_fixed_and_distinct():
    cfg = small_ensemble(identical_init=True)
    assert build_priors(small_ensemble(prior_scale=0.0), 16, 2, seed=0) is None
    pa, pb = build_priors(cfg, 16, 2, seed=0), build_priors(cfg, 16, 2, seed=0)
    assert all(s.kind in ("dense", "relu") for s in pa.specs)
    assert np.array_equal(pa.weights[0]["W"], pb.weights[0]["W"])
    assert not np.array_equal(pa.weights[0]["W"][0], pa.weights[0]["W"][1])
    # distinct priors pull identically initialised members apart
    params, _ = ensemble_train(cfg, DeepSea(4, 2), seed=0)
    assert not np.array_equal(params.weights[0]["W"][0], params.weights[0]["W"][1])


def test_single_member_ensemble():
    cfg = small_ensemble(ensemble_size=1)
    params, metrics = ensemble_train(cfg, DeepSea(4, 2), seed=0)
    assert params.weights[0]["W"].shape[0] == 1
    assert metrics[-1]["episode"] >= 40 and "solved_episode" in metrics[-1]


def test_ensemble_members_differ_and_deterministic():
    cfg = small_ensemble()
    p = build_ensemble(cfg, 16, 2, seed=0)
    assert not np.array_equal(p.weights[0]["W"][0], p.weights[0]["W"][1])
    a = ensemble_train(cfg, DeepSea(4, 2), seed=3, log_every=10)[1]
    b = ensemble_train(cfg, DeepSea(4, 2), seed=3, log_every=10)[1]
    strip = lambda ms: [{k: v for k, v in m.items() if k != "wall_clock_s"} for m in ms]
    assert strip(a) == strip(b)
    steps = [m["step"] for m in a]
    assert steps == sorted(set(steps))


def test_ensemble_solves_tiny_deepsea():
    cfg = small_ensemble(ensemble_size=5, num_envs=4, max_episodes=2000, solve_window=50, buffer_size=2000,
                         batch_size=32, hidden_size=16)
    _, metrics = ensemble_train(cfg, DeepSea(5, 4), seed=0)
    assert metrics[-1]["solved_episode"] is not None
