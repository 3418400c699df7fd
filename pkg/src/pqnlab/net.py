"""Batched feed-forward Q-networks with hand-written forward and backward passes.

Every array may carry extra leading axes in front of the usual
``(batch, features)`` layout.  Parameters initialised with ``ensemble=K``
get a leading ``K`` axis and the same code then evaluates K independent
networks in one call, which is how the bootstrapped ensemble is trained.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

KINDS = ("dense", "relu", "layernorm", "batchnorm")
VARIANTS = ("paper", "affine")

# canonical order of trainable arrays inside one layer
_PARAM_ORDER = ("W", "b", "gamma", "beta")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_dim: int
    out_dim: int
    norm_variant: str = "paper"
    eps: float = 1e-5
    bias: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.in_dim < 1 or self.out_dim < 1:
            raise ValueError("layer dimensions must be positive")
        if self.kind != "dense" and self.in_dim != self.out_dim:
            raise ValueError(f"{self.kind} layer must keep its width ({self.in_dim} != {self.out_dim})")
        if self.norm_variant not in VARIANTS:
            raise ValueError(f"unknown norm variant {self.norm_variant!r}")
        if not self.eps > 0:
            raise ValueError("eps must be positive")


@dataclass
class NetworkParams:
    """Layer specs plus per-layer trainable arrays and BatchNorm running statistics."""

    specs: tuple[LayerSpec, ...]
    weights: list[dict[str, np.ndarray]]
    stats: list[dict[str, np.ndarray]] = field(default_factory=list)
    momentum: float = 0.1

    @property
    def in_dim(self) -> int:
        return self.specs[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.specs[-1].out_dim

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            self.specs,
            [{k: v.copy() for k, v in layer.items()} for layer in self.weights],
            [{k: v.copy() for k, v in layer.items()} for layer in self.stats],
            self.momentum,
        )

    def with_weights(self, weights: list[dict[str, np.ndarray]]) -> "NetworkParams":
        return NetworkParams(self.specs, weights, self.stats, self.momentum)


def check_specs(specs: Sequence[LayerSpec]) -> None:
    if not specs:
        raise ValueError("network needs at least one layer")
    for prev, nxt in zip(specs[:-1], specs[1:]):
        if prev.out_dim != nxt.in_dim:
            raise ValueError(
                f"dimension mismatch: {prev.kind} out_dim={prev.out_dim} feeds {nxt.kind} in_dim={nxt.in_dim}"
            )


def mlp_specs(
    in_dim: int,
    out_dim: int,
    hidden: int,
    num_layers: int,
    norm: str = "layer",
    variant: str = "affine",
    eps: float = 1e-5,
    bias: bool = True,
    norm_last_only: bool = False,
) -> list[LayerSpec]:
    """``num_layers`` blocks of dense -> norm -> relu followed by a linear head.

    ``norm`` is one of ``layer``, ``batch`` or ``none``.  With
    ``norm_last_only`` only the block right before the head is normalised.
    """
    kind = {"layer": "layernorm", "batch": "batchnorm", "none": None}[norm]
    specs: list[LayerSpec] = []
    width = in_dim
    for i in range(num_layers):
        specs.append(LayerSpec("dense", width, hidden, bias=bias))
        if kind and (not norm_last_only or i == num_layers - 1):
            specs.append(LayerSpec(kind, hidden, hidden, norm_variant=variant, eps=eps))
        specs.append(LayerSpec("relu", hidden, hidden))
        width = hidden
    specs.append(LayerSpec("dense", width, out_dim, bias=bias))
    return specs


def layernorm_critic_specs(in_dim: int, width: int, out_dim: int = 1, eps: float = 1e-5) -> list[LayerSpec]:
    """The single-hidden-layer critic ``w^T ReLU(LayerNorm(M x))`` without biases."""
    return [
        LayerSpec("dense", in_dim, width, bias=False),
        LayerSpec("layernorm", width, width, norm_variant="paper", eps=eps),
        LayerSpec("relu", width, width),
        LayerSpec("dense", width, out_dim, bias=False),
    ]


def init_params(
    specs: Sequence[LayerSpec],
    seed: int | np.random.Generator = 0,
    std: float | None = None,
    ensemble: int | None = None,
    dtype: Any = np.float64,
    momentum: float = 0.1,
) -> NetworkParams:
    """Gaussian dense weights (std defaults to 1/sqrt(fan_in)), zero biases, unit scales."""
    specs = tuple(specs)
    check_specs(specs)
    if std is not None and std < 0:
        raise ValueError("std must be non-negative")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    lead = () if ensemble is None else (int(ensemble),)
    weights: list[dict[str, np.ndarray]] = []
    stats: list[dict[str, np.ndarray]] = []
    for spec in specs:
        layer: dict[str, np.ndarray] = {}
        stat: dict[str, np.ndarray] = {}
        if spec.kind == "dense":
            s = 1.0 / np.sqrt(spec.in_dim) if std is None else std
            layer["W"] = (rng.standard_normal(lead + (spec.out_dim, spec.in_dim)) * s).astype(dtype)
            if spec.bias:
                layer["b"] = np.zeros(lead + (spec.out_dim,), dtype=dtype)
        elif spec.kind in ("layernorm", "batchnorm") and spec.norm_variant == "affine":
            layer["gamma"] = np.ones(lead + (spec.out_dim,), dtype=dtype)
            layer["beta"] = np.zeros(lead + (spec.out_dim,), dtype=dtype)
        if spec.kind == "batchnorm":
            stat["mean"] = np.zeros(lead + (spec.out_dim,), dtype=dtype)
            stat["var"] = np.ones(lead + (spec.out_dim,), dtype=dtype)
        weights.append(layer)
        stats.append(stat)
    return NetworkParams(specs, weights, stats, momentum)


# ---------------------------------------------------------------- normalisers


def layernorm_forward(x, variant="paper", eps=1e-5, gamma=None, beta=None):
    """Normalise each row over its last axis.

    The ``paper`` variant returns ``(x - mean) / (sqrt(k) * sqrt(var + eps))``,
    whose Euclidean norm never exceeds one.  The ``affine`` variant drops the
    ``1/sqrt(k)`` factor and applies ``gamma * z + beta``.
    Returns ``(y, cache)``.
    """
    x = np.asarray(x)
    k = x.shape[-1]
    if k < 2:
        raise ValueError("layernorm needs at least two features")
    mu = x.mean(axis=-1, keepdims=True)
    d = x - mu
    sigma = np.sqrt((d * d).mean(axis=-1, keepdims=True) + eps)
    z = d / sigma
    if variant == "paper":
        y = z / np.sqrt(k)
    elif variant == "affine":
        y = z * _expand(gamma, z) + _expand(beta, z)
    else:
        raise ValueError(f"unknown norm variant {variant!r}")
    return y, (z, sigma, variant, gamma)


def layernorm_backward(dy, cache):
    z, sigma, variant, gamma = cache
    k = z.shape[-1]
    grads = {}
    if variant == "paper":
        dz = dy / np.sqrt(k)
    else:
        dz = dy * _expand(gamma, dy)
        grads["gamma"] = (dy * z).sum(axis=-2)
        grads["beta"] = dy.sum(axis=-2)
    dx = (dz - dz.mean(axis=-1, keepdims=True) - z * (dz * z).mean(axis=-1, keepdims=True)) / sigma
    return dx, grads


def batchnorm_forward(x, mode="train", eps=1e-5, running_mean=None, running_var=None,
                      variant="paper", gamma=None, beta=None):
    """Normalise each column over the batch axis (second to last).

    ``train`` uses batch statistics and reports them in the cache so the
    caller can fold them into the running averages; ``eval`` uses the
    running statistics.  Returns ``(y, cache)``.
    """
    x = np.asarray(x)
    if mode == "train":
        if x.shape[-2] < 2:
            raise ValueError("batchnorm in train mode needs a batch of at least two rows")
        mu = x.mean(axis=-2, keepdims=True)
        var = ((x - mu) ** 2).mean(axis=-2, keepdims=True)
    elif mode == "eval":
        mu = np.expand_dims(running_mean, -2)
        var = np.expand_dims(running_var, -2)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    sigma = np.sqrt(var + eps)
    z = (x - mu) / sigma
    if variant == "affine":
        y = z * _expand(gamma, z) + _expand(beta, z)
    else:
        y = z
    cache = {"z": z, "sigma": sigma, "mode": mode, "variant": variant, "gamma": gamma,
             "batch_mean": mu[..., 0, :], "batch_var": var[..., 0, :]}
    return y, cache


def batchnorm_backward(dy, cache):
    z, sigma = cache["z"], cache["sigma"]
    grads = {}
    if cache["variant"] == "affine":
        dz = dy * _expand(cache["gamma"], dy)
        grads["gamma"] = (dy * z).sum(axis=-2)
        grads["beta"] = dy.sum(axis=-2)
    else:
        dz = dy
    if cache["mode"] == "train":
        dx = (dz - dz.mean(axis=-2, keepdims=True) - z * (dz * z).mean(axis=-2, keepdims=True)) / sigma
    else:
        dx = dz / sigma
    return dx, grads


def _expand(vec, like):
    # (..., k) parameter against (..., N, k) activations
    return np.expand_dims(vec, -2) if vec.ndim == like.ndim - 1 else vec


# ------------------------------------------------------------------- network


def network_forward(params: NetworkParams, states, mode: str = "eval", relu_masks=None):
    """Evaluate the network on a batch; returns ``(outputs, cache)``.

    ``mode`` only matters for BatchNorm layers.  The forward pass is pure:
    train-mode batch statistics are left in the cache, see
    :func:`commit_batch_stats`.  ``relu_masks`` (one boolean array per ReLU,
    in order) pins the active units, e.g. to difference gradients without
    crossing a kink.
    """
    x = np.asarray(states, dtype=_dtype(params))
    if x.shape[-1] != params.in_dim:
        raise ValueError(f"input has {x.shape[-1]} features, network expects {params.in_dim}")
    caches = []
    masks = iter(relu_masks) if relu_masks is not None else None
    for spec, layer, stat in zip(params.specs, params.weights, _stats(params)):
        if spec.kind == "dense":
            W = layer["W"]
            y = x @ np.swapaxes(W, -1, -2)
            if "b" in layer:
                y = y + np.expand_dims(layer["b"], -2)
            caches.append(x)
        elif spec.kind == "relu":
            on = x > 0 if masks is None else np.broadcast_to(next(masks), x.shape)
            y = np.where(on, x, 0.0)
            caches.append(on)
        elif spec.kind == "layernorm":
            y, c = layernorm_forward(x, spec.norm_variant, spec.eps, layer.get("gamma"), layer.get("beta"))
            caches.append(c)
        else:
            y, c = batchnorm_forward(x, mode, spec.eps, stat.get("mean"), stat.get("var"),
                                     spec.norm_variant, layer.get("gamma"), layer.get("beta"))
            caches.append(c)
        x = y
    return x, {"layers": caches, "specs": params.specs, "mode": mode}


def relu_masks(cache) -> list[np.ndarray]:
    """Active-unit masks recorded by :func:`network_forward`, for reuse via ``relu_masks=``."""
    return [c for spec, c in zip(cache["specs"], cache["layers"]) if spec.kind == "relu"]


def network_backward(params: NetworkParams, cache, upstream, input_grad: bool = False):
    """Gradients of ``sum(upstream * outputs)`` with respect to every trainable array."""
    if cache["specs"] != params.specs:
        raise ValueError("cache was produced by a different network")
    g = np.asarray(upstream, dtype=_dtype(params))
    grads: list[dict[str, np.ndarray]] = [dict() for _ in params.specs]
    for i in range(len(params.specs) - 1, -1, -1):
        spec, layer, c = params.specs[i], params.weights[i], cache["layers"][i]
        if spec.kind == "dense":
            grads[i]["W"] = np.swapaxes(g, -1, -2) @ c
            if "b" in layer:
                grads[i]["b"] = g.sum(axis=-2)
            if i == 0 and not input_grad:
                break
            g = g @ layer["W"]
        elif spec.kind == "relu":
            g = g * c
        elif spec.kind == "layernorm":
            g, grads[i] = layernorm_backward(g, c)
        else:
            g, grads[i] = batchnorm_backward(g, c)
    if input_grad:
        return grads, g
    return grads


def commit_batch_stats(params: NetworkParams, cache) -> None:
    """Fold train-mode batch statistics into the BatchNorm running averages (in place)."""
    if cache["mode"] != "train":
        return
    m = params.momentum
    for spec, stat, c in zip(params.specs, params.stats, cache["layers"]):
        if spec.kind == "batchnorm":
            stat["mean"] = (1 - m) * stat["mean"] + m * c["batch_mean"]
            stat["var"] = (1 - m) * stat["var"] + m * c["batch_var"]


def q_values(params: NetworkParams, states, mode: str = "eval") -> np.ndarray:
    return network_forward(params, states, mode)[0]


def _stats(params: NetworkParams):
    return params.stats if params.stats else [{} for _ in params.specs]


def _dtype(params: NetworkParams):
    for layer in params.weights:
        for v in layer.values():
            return v.dtype
    return np.float64


# ------------------------------------------------------------- flat vectors


def param_keys(params: NetworkParams) -> list[tuple[int, str]]:
    return [(i, k) for i, layer in enumerate(params.weights) for k in _PARAM_ORDER if k in layer]


def gradient_vector(tree: list[dict[str, np.ndarray]] | NetworkParams) -> np.ndarray:
    """Flatten parameters or gradients in layer order, then W, b, gamma, beta."""
    layers = tree.weights if isinstance(tree, NetworkParams) else tree
    parts = [layers[i][k].ravel() for i, layer in enumerate(layers) for k in _PARAM_ORDER if k in layer]
    if not parts:
        return np.zeros(0)
    return np.concatenate(parts)


def unflatten(vec, like: NetworkParams | list[dict[str, np.ndarray]]) -> list[dict[str, np.ndarray]]:
    """Inverse of :func:`gradient_vector`, shaped after ``like``."""
    layers = like.weights if isinstance(like, NetworkParams) else like
    vec = np.asarray(vec)
    total = sum(a.size for layer in layers for a in layer.values())
    if vec.ndim != 1 or vec.size != total:
        raise ValueError(f"vector of size {vec.size} does not match {total} parameters")
    out: list[dict[str, np.ndarray]] = []
    pos = 0
    for layer in layers:
        d = {}
        for k in _PARAM_ORDER:
            if k in layer:
                n = layer[k].size
                d[k] = vec[pos:pos + n].reshape(layer[k].shape).astype(layer[k].dtype, copy=True)
                pos += n
        out.append(d)
    return out


def num_params(params: NetworkParams) -> int:
    return sum(a.size for layer in params.weights for a in layer.values())


def final_dense_index(params: NetworkParams) -> int:
    for i in range(len(params.specs) - 1, -1, -1):
        if params.weights[i]:
            if params.specs[i].kind != "dense":
                raise ValueError("last parameterised layer is not dense")
            return i
    raise ValueError("network has no parameters")


def per_sample_grads(params: NetworkParams, states, actions, mode: str = "eval") -> np.ndarray:
    """Rows of ``d Q(x_n, a_n) / d phi`` as flat vectors, one per sample."""
    states = np.atleast_2d(np.asarray(states, dtype=_dtype(params)))
    actions = np.asarray(actions, dtype=int).reshape(-1)
    rows = []
    for n in range(states.shape[0]):
        _, cache = network_forward(params, states[n:n + 1], mode)
        up = np.zeros((1, params.out_dim))
        up[0, actions[n]] = 1.0
        rows.append(gradient_vector(network_backward(params, cache, up)))
    return np.array(rows)
