import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pqnlab.envs import (Acrobot, BairdVecEnv, CartPole, DeepSea, TabularMDP, TabularVecEnv, baird_build, deepsea_mdp,
                         load_mdp, make_env, random_mdp, save_mdp, value_iteration)
from pqnlab.envs.baird import FEATURES
from pqnlab.envs.tabular import bellman_optimal, policy_q


def roll(env, seed, steps, action_seed=0):
    rng = np.random.default_rng(action_seed)
    out = [env.reset(seed)]
    for _ in range(steps):
        a = rng.integers(0, env.num_actions, env.num_envs)
        nxt, r, d, term = env.step(a)
        out.extend([nxt, r, d, term])
    return out


@pytest.mark.parametrize("make", [lambda n: CartPole(n), lambda n: Acrobot(n), lambda n: DeepSea(5, n),
                                  lambda n: BairdVecEnv(n)])
def test_reset_deterministic(make):
    assert np.array_equal(make(4).reset(3), make(4).reset(3))
    assert all(np.array_equal(a, b) for a, b in zip(roll(make(3), 1, 30), roll(make(3), 1, 30)))


def test_reset_contracts():
    obs = DeepSea(6, 4).reset(0)
    assert np.all(obs[:, 0] == 1) and np.all(obs.sum(axis=1) == 1)
    obs = CartPole(64).reset(0)
    assert np.all(np.abs(obs) <= 0.05)


@pytest.mark.parametrize("cls", [CartPole, Acrobot])
def test_vectorised_equals_independent_instances(cls):
    B, steps = 4, 300
    rng = np.random.default_rng(0)
    actions = rng.integers(0, 2, (steps, B))
    vec = cls(B)
    singles = [cls(1, instance_offset=i) for i in range(B)]
    ov = vec.reset(7)
    os_ = np.concatenate([s.reset(7) for s in singles])
    assert np.array_equal(ov, os_)
    for t in range(steps):
        nv, rv, dv, tv = vec.step(actions[t])
        res = [s.step(actions[t, i:i + 1]) for i, s in enumerate(singles)]
        assert np.array_equal(nv, np.concatenate([r[0] for r in res]))
        assert np.array_equal(rv, np.concatenate([r[1] for r in res]))
        assert np.array_equal(dv, np.concatenate([r[2] for r in res]))
        assert np.array_equal(tv, np.concatenate([r[3] for r in res]))


def test_step_validation():
    env = CartPole(2)
    env.reset(0)
    with pytest.raises(ValueError):
        env.step([0, 2])
    with pytest.raises(ValueError):
        env.step([0])
    with pytest.raises(ValueError):
        CartPole(0)


def test_cartpole_termination_reward():
    env = CartPole(1)
    env.reset(0)
    env.state[0] = [0.0, 0.0, 0.25, 0.0]
    nxt, r, d, term = env.step([1])
    assert d[0] and r[0] == 1.0 and env.terminated[0]
    assert abs(term[0, 2]) > env.theta_threshold
    assert np.all(np.abs(nxt) <= 0.05)


def test_truncation_flag():
    env = CartPole(1, max_steps=3)
    env.reset(0)
    for _ in range(2):
        assert not env.step([0])[2][0]
    _, _, d, _ = env.step([1])
    assert d[0] and env.truncated[0] and not env.terminated[0]


def test_auto_reset_does_not_leak_terminal_obs():
    env = DeepSea(4, 2)
    env.reset(0)
    for t in range(4):
        nxt, r, d, term = env.step([1, 0])
    assert np.all(d)
    assert np.array_equal(nxt, env.reset(0))
    assert np.all(term == 0)  # the terminal row is past the grid


def test_deepsea_rewards():
    N = 5
    env = DeepSea(N, 1)
    env.reset(0)
    total = 0.0
    for t in range(N):
        _, r, d, _ = env.step([1])
        if t < N - 1:
            assert r[0] == pytest.approx(-0.01 / N) and not d[0]
        total += r[0]
    assert d[0] and total == pytest.approx(0.99)
    env.reset(0)
    rs = [env.step([0])[1][0] for _ in range(N)]
    assert rs == [0.0] * N


@pytest.mark.parametrize("N", [3, 8, 20])
def test_deepsea_value_iteration_optimum(N):
    mdp = deepsea_mdp(N, gamma=1.0)
    Q = value_iteration(mdp)
    assert Q[0].max() == pytest.approx(0.99, abs=1e-12)
    assert Q[0].argmax() == 1


def test_deepsea_mdp_matches_env():
    N = 4
    mdp = deepsea_mdp(N)
    env = DeepSea(N, 1)
    rng = np.random.default_rng(0)
    for _ in range(20):
        env.reset(0)
        s = 0
        for _ in range(N):
            a = int(rng.integers(2))
            _, r, d, _ = env.step([a])
            assert r[0] == pytest.approx(mdp.R[s, a])
            s = int(np.argmax(mdp.P[s, a]))
            assert d[0] == mdp.terminal[s]


def test_deepsea_coords_observation():
    env = DeepSea(5, 1, obs="coords")
    obs = env.reset(0)
    assert obs.shape == (1, 10) and obs[0, 0] == 1 and obs[0, 5] == 1
    nxt, *_ = env.step([1])
    assert nxt[0, 1] == 1 and nxt[0, 6] == 1


def test_value_iteration_examples():
    mdp = TabularMDP(np.full((3, 2, 3), 1 / 3), np.zeros((3, 2)), 0.9)
    assert np.all(value_iteration(mdp) == 0)
    one = TabularMDP(np.ones((1, 1, 1)), np.ones((1, 1)), 0.9)
    assert value_iteration(one)[0, 0] == pytest.approx(10.0, abs=1e-8)
    rnd = random_mdp(5, 3, 0.9, seed=1)
    Q = value_iteration(rnd, tol=1e-10)
    assert np.max(np.abs(bellman_optimal(rnd, Q) - Q)) < 1e-10


def test_policy_q_solves_bellman():
    mdp = random_mdp(4, 2, 0.8, seed=2)
    pi = np.random.default_rng(0).dirichlet(np.ones(2), size=4)
    Q = policy_q(mdp, pi)
    assert np.allclose(Q, mdp.R + mdp.gamma * mdp.P @ (pi * Q).sum(1), atol=1e-12)


def test_tabular_validation():
    with pytest.raises(ValueError):
        TabularMDP(np.full((2, 1, 2), 0.4), np.zeros((2, 1)), 0.9)
    with pytest.raises(ValueError):
        TabularMDP(np.full((2, 1, 2), 0.5), np.ones((2, 1)), 0.9, r_max=0.5)


def test_mdp_file_roundtrip(tmp_path):
    mdp = random_mdp(3, 2, 0.95, seed=4)
    save_mdp(mdp, tmp_path / "m.txt")
    back = load_mdp(tmp_path / "m.txt")
    assert np.array_equal(back.P, mdp.P) and np.array_equal(back.R, mdp.R) and back.gamma == 0.95
    (tmp_path / "bad.txt").write_text("2 1\n1 0\n")
    with pytest.raises(ValueError):
        load_mdp(tmp_path / "bad.txt")


def test_tabular_env_follows_kernel():
    mdp = random_mdp(3, 2, 0.9, seed=0)
    env = TabularVecEnv(mdp, num_envs=2000, max_steps=None)
    env.reset(0)
    env.state[:] = 1
    env.step(np.zeros(2000, dtype=int))
    freq = np.bincount(env.state, minlength=3) / 2000
    assert np.allclose(freq, mdp.P[1, 0], atol=4 * np.sqrt(0.25 / 2000))


def test_baird_structure():
    mdp, sampling, feats = baird_build()
    expected = np.array([[2, 0, 0, 0, 0, 0, 0, 1], [0, 2, 0, 0, 0, 0, 0, 1], [0, 0, 2, 0, 0, 0, 0, 1],
                         [0, 0, 0, 2, 0, 0, 0, 1], [0, 0, 0, 0, 2, 0, 0, 1], [0, 0, 0, 0, 0, 2, 0, 1],
                         [0, 0, 0, 0, 0, 0, 1, 2]], dtype=float)
    assert np.array_equal(feats, expected) and np.array_equal(FEATURES, expected)
    assert mdp.gamma == 0.99 and np.all(mdp.R == 0)
    assert np.allclose(mdp.P[:, 1, 6], 1) and np.allclose(mdp.P[:, 0, :6], 1 / 6)
    assert np.allclose(sampling.mu[:, 0], 6 / 7) and np.all(sampling.pi[:, 1] == 1)
    assert np.allclose(sampling.d.sum(1), 1 / 7)
    assert np.all(policy_q(mdp, sampling.pi) == 0)


def test_baird_env_transitions():
    env = BairdVecEnv(1, max_steps=None)
    env.reset(0)
    for a in [0, 1, 0, 0, 1]:
        env.step([a])
        assert (env.state[0] == 6) if a == 1 else (env.state[0] < 6)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_rewards_bounded(seed):
    for env in (CartPole(3), Acrobot(3), DeepSea(4, 3), BairdVecEnv(3)):
        r = np.concatenate([x for x in roll(env, seed, 20, seed)[2::4]])
        assert np.all(np.abs(r) <= env.r_max + 1e-12)


def test_make_env():
    assert isinstance(make_env("deepsea", 2, size=3), DeepSea)
    with pytest.raises(ValueError):
        make_env("pong")


@pytest.mark.parametrize("name,cls", [("CartPole-v1", CartPole), ("Acrobot-v1", Acrobot)])
def test_dynamics_match_gymnasium(name, cls):
    gym = pytest.importorskip("gymnasium")
    ref = gym.make(name).unwrapped
    ref.reset(seed=0)
    ours = cls(1)
    ours.reset(0)
    rng = np.random.default_rng(0)
    for episode in range(5):
        ref.reset(seed=episode)
        ours.state[0] = np.array(ref.state, dtype=np.float64)
        ours.t[0] = 0
        for _ in range(200):
            a = int(rng.integers(ours.num_actions))
            obs, r, term, _, _ = ref.step(a)
            _, our_r, our_d, our_obs = ours.step([a])
            assert np.allclose(our_obs[0], obs, atol=1e-5)
            assert our_r[0] == r and bool(our_d[0]) == term
            if term:
                break
            ours.state[0] = np.array(ref.state, dtype=np.float64)
