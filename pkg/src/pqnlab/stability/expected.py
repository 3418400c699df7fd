"""Deterministic TD training with exact expected updates on enumerable MDPs."""
from __future__ import annotations

import numpy as np

from ..envs.baird import INITIAL_WEIGHTS, baird_build
from ..envs.tabular import SamplingDistribution, TabularMDP
from ..net import LayerSpec, NetworkParams, gradient_vector, init_params, layernorm_critic_specs, unflatten
from .jacobian import expected_td_vector, td_error_norm


def expected_td_train(params: NetworkParams, mdp: TabularMDP, sampling: SamplingDistribution, lr: float,
                      sweeps: int, l2_eta: float = 0.0, gamma: float | None = None, record_every: int = 100,
                      blowup: float = 1e12) -> dict:
    """Iterate ``phi <- phi + lr * delta(phi)`` for ``sweeps`` sweeps.

    Every sweep is one full expected update over all state-action pairs.
    Records the parameter norm and the d-weighted RMS TD error every
    ``record_every`` sweeps (and at sweep 0).  Stops early once the
    parameter norm exceeds ``blowup`` times its initial value.
    """
    hist = {"sweep": [], "param_norm": [], "td_error_norm": []}

    def record(i, p):
        hist["sweep"].append(i)
        hist["param_norm"].append(float(np.linalg.norm(gradient_vector(p))))
        hist["td_error_norm"].append(td_error_norm(p, mdp, sampling, gamma))

    record(0, params)
    norm0 = hist["param_norm"][0]
    for i in range(1, sweeps + 1):
        step = expected_td_vector(params, mdp, sampling, gamma, l2_eta)
        params = params.with_weights(unflatten(gradient_vector(params) + lr * step, params))
        if i % record_every == 0 or i == sweeps:
            record(i, params)
            if not np.isfinite(hist["param_norm"][-1]) or hist["param_norm"][-1] > blowup * max(norm0, 1e-300):
                break
    hist["params"] = params
    return hist


def baird_linear_params() -> NetworkParams:
    """One bias-free linear head per action, both starting from the canonical weights."""
    params = init_params([LayerSpec("dense", 8, 2, bias=False)], seed=0)
    params.weights[0]["W"][:] = np.asarray(INITIAL_WEIGHTS, float)[None, :]
    return params


def baird_layernorm_params(width: int, seed) -> NetworkParams:
    return init_params(layernorm_critic_specs(8, width, 2), seed=seed)


def baird_runs(variant: str, seeds, lr: float, sweeps: int, width: int = 16, l2_eta: float = 1.0,
               gamma: float = 0.99, record_every: int = 100) -> list[dict]:
    """Expected-update TD on Baird's counterexample, one history per seed."""
    mdp, sampling, _ = baird_build(gamma)
    out = []
    for s in seeds:
        if variant == "linear":
            params, eta = baird_linear_params(), 0.0
        elif variant == "layernorm":
            params, eta = baird_layernorm_params(width, np.random.default_rng([s, 7])), l2_eta
        else:
            raise ValueError(f"unknown Baird variant {variant!r}")
        h = expected_td_train(params, mdp, sampling, lr, sweeps, eta, gamma, record_every)
        h["seed"] = s
        out.append(h)
    return out
