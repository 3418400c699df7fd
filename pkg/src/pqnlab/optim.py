"""Parameter update rules on lists of per-layer array dicts."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .net import NetworkParams, final_dense_index

Tree = list[dict[str, np.ndarray]]


def tree_map(fn, *trees: Tree) -> Tree:
    return [{k: fn(*(t[i][k] for t in trees)) for k in trees[0][i]} for i in range(len(trees[0]))]


def tree_zeros(tree: Tree) -> Tree:
    return tree_map(np.zeros_like, tree)


def tree_add(a: Tree, b: Tree) -> Tree:
    # b may lack keys that a has (e.g. an l2 term that only touches W)
    return [{k: v + b[i][k] if k in b[i] else v for k, v in layer.items()} for i, layer in enumerate(a)]


def global_norm(grads: Tree) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for layer in grads for g in layer.values())))


def clip_global_norm(grads: Tree, max_norm: float) -> Tree:
    """Rescale all gradients by ``max_norm / norm`` when the joint l2 norm exceeds ``max_norm``."""
    norm = global_norm(grads)
    if not np.isfinite(max_norm) or norm <= max_norm:
        return grads
    scale = max_norm / norm
    return tree_map(lambda g: g * scale, grads)


def lr_at(step: int, total_steps: int, lr0: float, linear_decay: bool) -> float:
    if not linear_decay:
        return lr0
    if total_steps <= 0:
        return lr0
    frac = min(max(step / total_steps, 0.0), 1.0)
    return lr0 * (1.0 - frac)


@dataclass
class OptimState:
    kind: str = "radam"
    lr: float = 2.5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    rect_threshold: float = 5.0
    t: int = 0
    m: Tree | None = None
    v: Tree | None = None


def make_optimizer(kind: str, weights: Tree, lr: float, **kw) -> OptimState:
    if kind not in ("sgd", "adam", "radam"):
        raise ValueError(f"unknown optimiser {kind!r}")
    state = OptimState(kind=kind, lr=lr, **kw)
    if kind != "sgd":
        state.m = tree_zeros(weights)
        state.v = tree_zeros(weights)
    return state


def _check_shapes(weights: Tree, grads: Tree):
    if len(weights) != len(grads):
        raise ValueError("gradient tree has a different number of layers")
    for w, g in zip(weights, grads):
        if w.keys() != g.keys() or any(w[k].shape != g[k].shape for k in w):
            raise ValueError("gradient shapes do not match parameters")


def sgd_step(weights: Tree, grads: Tree, lr: float) -> Tree:
    _check_shapes(weights, grads)
    return tree_map(lambda p, g: p - lr * g, weights, grads)


def _moments(state: OptimState, grads: Tree):
    # in-place first and second moment updates; the trees are owned by the state
    b1, b2 = state.beta1, state.beta2
    for m_layer, v_layer, g_layer in zip(state.m, state.v, grads):
        for k, g in g_layer.items():
            m, v = m_layer[k], v_layer[k]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)


def _adaptive_step(state: OptimState, weights: Tree, scale: float, c1: float, c2: float) -> Tree:
    out = []
    for w_layer, m_layer, v_layer in zip(weights, state.m, state.v):
        new = {}
        for k, p in w_layer.items():
            denom = np.sqrt(v_layer[k] / c2)
            denom += state.eps
            new[k] = p - (scale / c1) * m_layer[k] / denom
        out.append(new)
    return out


def adam_step(state: OptimState, weights: Tree, grads: Tree, lr: float | None = None):
    """Bias-corrected Adam.  Returns ``(new_weights, state)``; the state is updated in place."""
    _check_shapes(weights, grads)
    lr = state.lr if lr is None else lr
    state.t += 1
    _moments(state, grads)
    c1, c2 = 1 - state.beta1 ** state.t, 1 - state.beta2 ** state.t
    return _adaptive_step(state, weights, lr, c1, c2), state


def radam_step(state: OptimState, weights: Tree, grads: Tree, lr: float | None = None):
    """Rectified Adam.

    While the length of the approximated simple moving average is below
    ``rect_threshold`` the adaptive term is skipped and the bias-corrected
    momentum is applied directly.
    """
    _check_shapes(weights, grads)
    lr = state.lr if lr is None else lr
    b2 = state.beta2
    state.t += 1
    t = state.t
    _moments(state, grads)
    c1, c2 = 1 - state.beta1 ** t, 1 - b2 ** t
    rho_inf = 2.0 / (1 - b2) - 1.0
    rho_t = rho_inf - 2.0 * t * b2 ** t / c2
    if rho_t >= state.rect_threshold:
        r = np.sqrt((rho_t - 4) * (rho_t - 2) * rho_inf / ((rho_inf - 4) * (rho_inf - 2) * rho_t))
        return _adaptive_step(state, weights, lr * r, c1, c2), state
    return tree_map(lambda p, m: p - lr * (m / c1), weights, state.m), state


def apply_update(state: OptimState, weights: Tree, grads: Tree, lr: float | None = None):
    if state.kind == "sgd":
        state.t += 1
        return sgd_step(weights, grads, state.lr if lr is None else lr), state
    if state.kind == "adam":
        return adam_step(state, weights, grads, lr)
    return radam_step(state, weights, grads, lr)


def l2_final_layer_term(params: NetworkParams, coeff: float) -> Tree:
    """Gradient contribution ``coeff * W`` on the final dense weight matrix, zero elsewhere.

    Added to a loss gradient, this is the descent-convention form of
    subtracting ``coeff * w`` from the TD update of the head weights.
    """
    if coeff < 0:
        raise ValueError("coeff must be non-negative")
    last = final_dense_index(params)
    out = tree_zeros(params.weights)
    out[last]["W"] = coeff * params.weights[last]["W"]
    return out


def l2_coeff(gamma: float, eta: float = 1.0) -> float:
    """Strength ``(eta * gamma / 2) ** 2`` of the head-weight regulariser."""
    return (eta * gamma / 2.0) ** 2
