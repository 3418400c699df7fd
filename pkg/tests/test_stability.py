import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pqnlab.envs import SamplingDistribution, TabularMDP, baird_build, random_mdp
from pqnlab.net import LayerSpec, gradient_vector, init_params, layernorm_critic_specs, unflatten
from pqnlab.stability import (OFF_POLICY_GUARD_C, ProbeResult, batchnorm_myopia_probe, curvature_matrix,
                              expected_td_train, expected_td_vector, hessian_norm, hvp, max_real_eig,
                              max_real_eig_schur, off_policy_probe, off_policy_statistic, off_policy_sup, td_error_norm,
                              td_jacobian, theorem2_sweep, theorem3_sweep)
from pqnlab.stability.expected import baird_linear_params
from pqnlab.stability.jacobian import MAX_PARAMS
from pqnlab.stability.probes import _head_slice


def linear_params(in_dim, out_dim, seed=0):
    return init_params([LayerSpec("dense", in_dim, out_dim, bias=False)], seed=seed)


def featured_mdp(S=5, A=2, m=3, gamma=0.9, seed=0):
    base = random_mdp(S, A, gamma, seed=seed)
    feats = np.random.default_rng(seed + 100).standard_normal((S, m))
    return TabularMDP(base.P, base.R, gamma, features=feats)


def on_policy_sampling(mdp, pi):
    P_pi = np.einsum("sa,sat->st", pi, mdp.P)
    w, V = np.linalg.eig(P_pi.T)
    stat = np.real(V[:, np.argmin(np.abs(w - 1))])
    stat = stat / stat.sum()
    return SamplingDistribution.from_state_dist(stat, pi, pi)


def random_sampling(mdp, seed):
    rng = np.random.default_rng(seed)
    S, A = mdp.R.shape
    mu = rng.dirichlet(np.ones(A), size=S)
    pi = rng.dirichlet(np.ones(A), size=S)
    return SamplingDistribution.from_state_dist(rng.dirichlet(np.ones(S)), mu, pi)


# ---------------------------------------------------------------- eigenvalues


def test_max_real_eig_examples():
    assert max_real_eig(np.diag([-1.0, -2.0])) == pytest.approx(-1.0, abs=1e-14)
    assert max_real_eig(np.array([[0.0, -1.0], [1.0, 0.0]])) == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(ValueError):
        max_real_eig(np.ones((2, 3)))
    with pytest.raises(ValueError):
        max_real_eig(np.array([[np.nan]]))


@pytest.mark.parametrize("seed", range(5))
def test_max_real_eig_cross_method(seed):
    A = np.random.default_rng(seed).standard_normal((50, 50))
    assert abs(max_real_eig(A) - max_real_eig_schur(A)) < 1e-6


# ------------------------------------------------------------------ jacobian


def test_linear_gamma_zero_is_negative_semidefinite():
    mdp = featured_mdp()
    rep = td_jacobian(mdp, random_sampling(mdp, 1), linear_params(3, 2), gamma=0.0)
    assert np.allclose(rep.jacobian, rep.jacobian.T, atol=1e-12)
    assert np.max(np.linalg.eigvalsh(rep.jacobian)) <= 1e-12
    assert np.all(rep.curvature == 0)


def test_baird_linear_jacobian_unstable():
    mdp, sampling, _ = baird_build()
    rep = td_jacobian(mdp, sampling, baird_linear_params())
    assert rep.max_real > 0
    assert rep.eigenvalues.size == 16 and np.all(np.isfinite(rep.jacobian))


@pytest.mark.parametrize("seed", range(4))
def test_on_policy_linear_is_stable(seed):
    mdp = featured_mdp(S=6, A=3, m=4, gamma=0.95, seed=seed)
    pi = np.random.default_rng(seed).dirichlet(np.ones(3), size=6)
    rep = td_jacobian(mdp, on_policy_sampling(mdp, pi), linear_params(4, 3, seed))
    assert rep.max_real <= 1e-10


@pytest.mark.parametrize("l2_eta", [0.0, 1.0])
def test_jacobian_matches_difference_of_td_vector(l2_eta):
    mdp = featured_mdp(S=4, A=2, m=3, seed=2)
    sampling = random_sampling(mdp, 3)
    params = init_params(layernorm_critic_specs(3, 6, out_dim=2), seed=4)
    rep = td_jacobian(mdp, sampling, params, l2_eta=l2_eta)
    base = gradient_vector(params)
    d0 = expected_td_vector(params, mdp, sampling, l2_eta=l2_eta)
    rng = np.random.default_rng(5)
    eps = 1e-5
    for _ in range(5):
        u = rng.standard_normal(base.size)
        moved = params.with_weights(unflatten(base + eps * u, params))
        fd = (expected_td_vector(moved, mdp, sampling, l2_eta=l2_eta) - d0) / eps
        Ju = rep.jacobian @ u
        assert np.linalg.norm(fd - Ju) / np.linalg.norm(Ju) < 1e-3


def test_l2_shifts_only_head_diagonal():
    mdp = featured_mdp(S=4, A=2, m=3, seed=1)
    sampling = random_sampling(mdp, 2)
    params = init_params(layernorm_critic_specs(3, 5, out_dim=2), seed=0)
    plain = td_jacobian(mdp, sampling, params, l2_eta=0.0).jacobian
    for eta in (1.0, 2.0):
        reg = td_jacobian(mdp, sampling, params, l2_eta=eta).jacobian
        head = np.zeros(plain.shape[0], dtype=bool)
        head[_head_slice(params)] = True
        expected = -np.diag(np.where(head, (eta * 0.9 / 2) ** 2, 0.0))
        assert np.array_equal(reg - plain, expected)


def test_jacobian_size_limit():
    mdp = featured_mdp(m=3)
    big = init_params(layernorm_critic_specs(3, MAX_PARAMS // 4, out_dim=2), seed=0)
    with pytest.raises(ValueError):
        td_jacobian(mdp, random_sampling(mdp, 0), big)


def test_td_error_zero_at_baird_fixed_point():
    mdp, sampling, _ = baird_build()
    p = baird_linear_params()
    p.weights[0]["W"][:] = 0.0
    assert td_error_norm(p, mdp, sampling) == 0.0
    assert np.all(expected_td_vector(p, mdp, sampling) == 0)


def test_baird_linear_norm_grows_monotonically():
    mdp, sampling, _ = baird_build()
    params = baird_linear_params()
    solid = []
    for _ in range(300):
        solid.append(np.linalg.norm(params.weights[0]["W"][1]))
        step = expected_td_vector(params, mdp, sampling)
        params = params.with_weights(unflatten(gradient_vector(params) + 0.05 * step, params))
    assert all(b > a for a, b in zip(solid, solid[1:]))
    hist = expected_td_train(baird_linear_params(), mdp, sampling, lr=0.05, sweeps=1000, record_every=20)
    norms = hist["param_norm"][1:]
    assert all(b > a for a, b in zip(norms, norms[1:]))


# ------------------------------------------------------------------ curvature


def bilinear_hvp(W1, w2, x, v):
    """Analytic Hessian-vector product of Q = w2 . (W1 x), flattened as (W1, w2)."""
    k, n = W1.shape
    vM, vw = v[:k * n].reshape(k, n), v[k * n:]
    return np.concatenate([np.outer(vw, x).ravel(), vM @ x])


def test_hvp_matches_quadratic_oracle():
    params = init_params([LayerSpec("dense", 3, 4, bias=False), LayerSpec("dense", 4, 1, bias=False)], seed=0)
    x = np.array([0.3, -1.2, 2.0])
    rng = np.random.default_rng(1)
    for _ in range(5):
        v = rng.standard_normal(16)
        ref = bilinear_hvp(params.weights[0]["W"], params.weights[1]["W"][0], x, v)
        assert np.max(np.abs(hvp(params, x, 0, v) - ref)) < 1e-6


def test_curvature_matrix_is_hessian_columns():
    params = init_params(layernorm_critic_specs(3, 5), seed=2)
    x = np.random.default_rng(0).standard_normal((1, 3))
    C = curvature_matrix(params, x, np.ones((1, 1)), chunk=7)
    P = C.shape[0]
    H = np.column_stack([hvp(params, x, 0, e) for e in np.eye(P)])
    assert np.allclose(C, 0.5 * (H + H.T), atol=1e-8)
    assert hessian_norm(params, x, 0) == pytest.approx(np.max(np.abs(np.linalg.eigvalsh(C))), rel=1e-5)


def test_linear_model_has_no_curvature():
    params = linear_params(4, 1)
    x = np.ones(4)
    assert np.max(np.abs(hvp(params, x, 0, np.arange(4.0)))) < 1e-9


# ---------------------------------------------------------------- off-policy


def test_off_policy_statistic_basics():
    rng = np.random.default_rng(0)
    g, gn = rng.standard_normal(6), rng.standard_normal(6)
    v = rng.standard_normal((100, 6))
    assert np.all(off_policy_statistic(g, gn, v, 0.0) <= 0)
    basis = np.linalg.svd(np.stack([g, gn]))[2]
    assert np.allclose(off_policy_statistic(g, gn, basis[2:], 0.99), 0.0, atol=1e-14)
    with pytest.raises(ValueError):
        off_policy_statistic(g, gn, np.zeros((1, 6)), 0.99)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31), P=st.integers(2, 12), gamma=st.floats(0, 1), penalise=st.booleans())
def test_off_policy_sup_matches_dense_eigensolve(seed, P, gamma, penalise):
    rng = np.random.default_rng(seed)
    g, gn = rng.standard_normal(P), rng.standard_normal(P)
    A = gamma * np.outer(gn, g) - np.outer(g, g)
    A = 0.5 * (A + A.T)
    sl = slice(P // 2, P) if penalise else None
    if penalise:
        A[sl, sl] -= 0.3 * np.eye(P - P // 2)
    value, vec = off_policy_sup(g, gn, gamma, sl, 0.3 if penalise else 0.0)
    assert value == pytest.approx(np.max(np.linalg.eigvalsh(A)), abs=1e-10)
    if vec is not None and value > 1e-9:
        assert vec @ A @ vec / (vec @ vec) == pytest.approx(value, abs=1e-9)


def test_off_policy_probe_guard():
    rng = np.random.default_rng(0)
    gamma = 0.99
    for k in (16, 64):
        worst = -np.inf
        for _ in range(20):
            params = init_params(layernorm_critic_specs(8, k), seed=rng)
            X = rng.standard_normal((4, 8))
            v = rng.standard_normal((8, gradient_vector(params).size))
            worst = max(worst, off_policy_probe(params, (X[:2], [0, 0], X[2:], [0, 0]), v, gamma))
        assert worst <= (gamma / 2) ** 2 + OFF_POLICY_GUARD_C / np.sqrt(k)


def test_off_policy_probe_gamma_zero():
    params = init_params(layernorm_critic_specs(3, 8), seed=0)
    X = np.random.default_rng(0).standard_normal((2, 3))
    v = np.random.default_rng(1).standard_normal((10, gradient_vector(params).size))
    assert off_policy_probe(params, (X[:1], [0], X[1:], [0]), v, 0.0) <= 1e-15


# --------------------------------------------------------------------- sweeps


def test_theorem2_sweep_small():
    a = theorem2_sweep([4, 16], trials=20, seed=3)
    b = theorem2_sweep([4, 16], trials=20, seed=3)
    assert a.statistic == b.statistic and a.extra == b.extra
    assert all(np.all(np.isfinite(s)) for s in a.samples)
    assert all(e >= 0 for e in a.extra["excess"])
    assert a.reference == pytest.approx(0.245025)
    with pytest.raises(ValueError):
        theorem2_sweep([1], trials=1)


def test_theorem3_sweep_small_and_linear_control():
    a = theorem3_sweep([4, 16], trials=5, seed=1)
    assert a.statistic == theorem3_sweep([4, 16], trials=5, seed=1).statistic
    assert all(s > 0 for s in a.statistic)
    lin = theorem3_sweep([4, 16], trials=5, seed=1, linear=True)
    assert max(lin.statistic) < 1e-6


def test_probe_result_helpers():
    r = ProbeResult("k", [1, 10, 100], [1.0, 0.1, 0.01], 0.0, [1, 1, 1], [np.ones(2)] * 3, {"half": [1, .5, .25]})
    assert r.decreasing and r.exponent() == pytest.approx(-1.0)
    assert r.exponent("half") == pytest.approx(np.log10(0.25) / 2)
    assert len(list(r.rows())) == 6
    assert np.isnan(ProbeResult("k", [1, 2], [1.0, 0.0], 0, [1, 1], []).exponent())
    assert not ProbeResult("k", [1, 2], [1.0, 1.0], 0, [1, 1], []).decreasing


# ---------------------------------------------------------------------- myopia


def myopia_setup(seed=0):
    mdp = random_mdp(5, 2, 0.9, seed=seed)
    pi = np.random.default_rng(seed).dirichlet(np.ones(2), size=5)
    sampling = SamplingDistribution.from_state_dist(np.full(5, 0.2), np.full((5, 2), 0.5), pi)
    return mdp, sampling


def test_myopia_constant_features_give_zero():
    mdp, sampling = myopia_setup()
    res = batchnorm_myopia_probe(mdp, sampling, np.ones((5, 2, 3)), np.ones(3), [2, 16], trials=5)
    assert res.statistic == [0.0, 0.0]
    with pytest.raises(ValueError):
        batchnorm_myopia_probe(mdp, sampling, np.ones((5, 2, 3)), np.ones(3), [1], trials=1)


def test_myopia_bootstrap_shrinks():
    mdp, sampling = myopia_setup(1)
    f = np.random.default_rng(2).standard_normal((5, 2, 4))
    res = batchnorm_myopia_probe(mdp, sampling, f, np.ones(4), [8, 1024], trials=50, seed=3)
    assert res.statistic[1] < res.statistic[0]
    assert res.reference == pytest.approx(float(sampling.d.reshape(-1) @ mdp.R.reshape(-1)))
