"""Exact expected TD-error vectors and their Jacobians on enumerable MDPs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ..envs.tabular import SamplingDistribution, TabularMDP
from ..net import (NetworkParams, final_dense_index, gradient_vector, network_backward, network_forward, param_keys,
                   per_sample_grads, relu_masks)

MAX_PARAMS = 5000


@dataclass
class JacobianReport:
    jacobian: np.ndarray
    eigenvalues: np.ndarray
    max_real: float
    off_policy: np.ndarray
    curvature: np.ndarray
    l2_diagonal: np.ndarray
    active_max_real: float
    neutral_count: int


def max_real_eig(matrix) -> float:
    """Largest real part over the full spectrum."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError("matrix must be square")
    if not np.all(np.isfinite(matrix)):
        raise ValueError("matrix has non-finite entries")
    return float(np.max(np.linalg.eigvals(matrix).real))


def max_real_eig_schur(matrix) -> float:
    """Same quantity through a real Schur decomposition (independent LAPACK path)."""
    T = scipy.linalg.schur(np.asarray(matrix, dtype=np.float64), output="real")[0]
    n = T.shape[0]
    best = -np.inf
    i = 0
    while i < n:
        if i + 1 < n and abs(T[i + 1, i]) > 0:
            best = max(best, 0.5 * (T[i, i] + T[i + 1, i + 1]))
            i += 2
        else:
            best = max(best, T[i, i])
            i += 1
    return float(best)


def _successor_matrix(mdp: TabularMDP, pi: np.ndarray) -> np.ndarray:
    """``M[x, x']``: probability that pair x is followed by pair x' under the target policy."""
    S, A = mdp.R.shape
    cont = (~mdp.terminal).astype(np.float64)
    # (S*A, S) next-state probabilities, then spread each next state over pi's actions
    Ps = mdp.P.reshape(S * A, S) * cont
    return (Ps[:, :, None] * pi[None, :, :]).reshape(S * A, S * A)


def _all_q(params: NetworkParams, mdp: TabularMDP) -> np.ndarray:
    return network_forward(params, mdp.features, "eval")[0].reshape(-1)


def expected_td_vector(params: NetworkParams, mdp: TabularMDP, sampling: SamplingDistribution,
                       gamma: float | None = None, l2_eta: float = 0.0) -> np.ndarray:
    """``E[(r + gamma Q(x') - Q(x)) grad Q(x)]`` enumerated exactly, minus the head-weight l2 term."""
    gamma = mdp.gamma if gamma is None else gamma
    S, A = mdp.R.shape
    q = _all_q(params, mdp)
    td = mdp.R.reshape(-1) + gamma * _successor_matrix(mdp, sampling.pi) @ q - q
    upstream = (sampling.d.reshape(-1) * td).reshape(S, A)
    _, cache = network_forward(params, mdp.features, "eval")
    delta = gradient_vector(network_backward(params, cache, upstream))
    if l2_eta:
        delta = delta - l2_diagonal(params, gamma, l2_eta) * gradient_vector(params)
    return delta


def td_error_norm(params: NetworkParams, mdp: TabularMDP, sampling: SamplingDistribution,
                  gamma: float | None = None) -> float:
    """Root of the d-weighted mean squared expected TD error over the sampled pairs."""
    gamma = mdp.gamma if gamma is None else gamma
    q = _all_q(params, mdp)
    td = mdp.R.reshape(-1) + gamma * _successor_matrix(mdp, sampling.pi) @ q - q
    return float(np.sqrt(np.sum(sampling.d.reshape(-1) * td * td)))


def l2_diagonal(params: NetworkParams, gamma: float, l2_eta: float) -> np.ndarray:
    """Flat vector equal to ``(eta * gamma / 2)^2`` on the head weight matrix, 0 elsewhere."""
    last = final_dense_index(params)
    parts = []
    for i, k in param_keys(params):
        arr = params.weights[i][k]
        val = (l2_eta * gamma / 2.0) ** 2 if (i == last and k == "W" and l2_eta) else 0.0
        parts.append(np.full(arr.size, val))
    return np.concatenate(parts)


def stacked_weights(flat_rows: np.ndarray, like: NetworkParams) -> list[dict[str, np.ndarray]]:
    """Unflatten a ``(m, P)`` matrix into weights with a leading axis of size m."""
    m = flat_rows.shape[0]
    out, pos = [], 0
    for layer in like.weights:
        d = {}
        for k in ("W", "b", "gamma", "beta"):
            if k in layer:
                n = layer[k].size
                d[k] = flat_rows[:, pos:pos + n].reshape((m,) + layer[k].shape)
                pos += n
        out.append(d)
    return out


def batched_gradients(params: NetworkParams, flat_rows: np.ndarray, states, upstream, masks=None) -> np.ndarray:
    """``grad_phi sum(upstream * Q_phi(states))`` for every parameter vector row of ``flat_rows``."""
    stacked = params.with_weights(stacked_weights(flat_rows, params))
    _, cache = network_forward(stacked, states, "eval", relu_masks=masks)
    grads = network_backward(stacked, cache, np.broadcast_to(upstream, (flat_rows.shape[0],) + np.shape(upstream)))
    return np.concatenate([g.reshape(flat_rows.shape[0], -1) for layer in grads
                           for k in ("W", "b", "gamma", "beta") if k in layer for g in [layer[k]]], axis=1)


def curvature_matrix(params: NetworkParams, states, upstream, h: float = 1e-5, chunk: int = 256) -> np.ndarray:
    """``sum_n upstream[n, a] * Hessian Q(x_n, a)`` by central differences of analytic gradients.

    ReLU masks are held at the base point, so the result is the Hessian of
    the piecewise-smooth Q on the current linear region (ReLU contributes no
    curvature almost everywhere).
    """
    base = gradient_vector(params)
    masks = relu_masks(network_forward(params, states, "eval")[1])
    P = base.size
    C = np.empty((P, P))
    for lo in range(0, P, chunk):
        hi = min(lo + chunk, P)
        E = np.zeros((hi - lo, P))
        E[np.arange(hi - lo), np.arange(lo, hi)] = h
        plus = batched_gradients(params, base + E, states, upstream, masks)
        minus = batched_gradients(params, base - E, states, upstream, masks)
        C[:, lo:hi] = ((plus - minus) / (2 * h)).T
    return 0.5 * (C + C.T)


def td_jacobian(mdp: TabularMDP, sampling: SamplingDistribution, params: NetworkParams,
                gamma: float | None = None, l2_eta: float = 0.0, h: float = 1e-5,
                neutral_tol: float = 1e-9) -> JacobianReport:
    """Assemble ``d delta / d phi`` exactly over every (x, x') pair.

    The outer-product part is exact; the curvature part uses central
    differences of analytic gradients.  Eigenvalues whose modulus is below
    ``neutral_tol`` times the spectral radius belong to parameter directions
    that leave every sampled Q-value unchanged; ``active_max_real`` ignores them.
    """
    gamma = mdp.gamma if gamma is None else gamma
    S, A = mdp.R.shape
    P_total = gradient_vector(params).size
    if P_total > MAX_PARAMS:
        raise ValueError(f"{P_total} parameters is too many to enumerate (limit {MAX_PARAMS})")
    pairs_s = np.repeat(np.arange(S), A)
    pairs_a = np.tile(np.arange(A), S)
    G = per_sample_grads(params, mdp.features[pairs_s], pairs_a)  # (S*A, P)
    M = _successor_matrix(mdp, sampling.pi)
    d = sampling.d.reshape(-1)
    q = _all_q(params, mdp)
    td = mdp.R.reshape(-1) + gamma * M @ q - q
    off = G.T @ (d[:, None] * (gamma * (M @ G) - G))
    curv = curvature_matrix(params, mdp.features, (d * td).reshape(S, A), h=h)
    l2 = l2_diagonal(params, gamma, l2_eta)
    J = off + curv - np.diag(l2)
    eig = np.linalg.eigvals(J)
    radius = np.max(np.abs(eig)) if eig.size else 0.0
    active = np.abs(eig) > neutral_tol * max(radius, 1e-300)
    active_max = float(np.max(eig.real[active])) if active.any() else 0.0
    return JacobianReport(J, eig, float(np.max(eig.real)), off, curv, l2, active_max,
                          int((~active).sum()))
