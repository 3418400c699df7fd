"""Hyperparameter records for the agents (key names follow the usual PQN tables, lower-cased)."""
from __future__ import annotations

from dataclasses import dataclass, fields

NORM_TYPES = ("layer_norm", "batch_norm", "none")


@dataclass
class PqnConfig:
    num_envs: int = 128
    num_steps: int = 32
    total_timesteps: int = 500_000
    eps_start: float = 1.0
    eps_finish: float = 0.05
    eps_decay: float = 0.2
    num_epochs: int = 2
    num_minibatches: int = 16
    gamma: float = 0.99
    lam: float = 0.65
    lr: float = 2.5e-4
    max_grad_norm: float = 10.0
    lr_linear_decay: bool = False
    norm_type: str = "layer_norm"
    norm_variant: str = "affine"
    hidden_size: int = 128
    num_layers: int = 2
    l2_eta: float = 0.0
    optimizer: str = "radam"
    eval_every: int = 5
    eval_episodes: int = 16

    def __post_init__(self):
        validate_pqn(self)

    @property
    def batch_size(self) -> int:
        return self.num_envs * self.num_steps

    @property
    def num_iterations(self) -> int:
        return max(self.total_timesteps // self.batch_size, 1)


def validate_pqn(cfg) -> None:
    problems = []
    if cfg.num_envs < 1:
        problems.append(f"num_envs={cfg.num_envs} must be >= 1")
    if cfg.num_steps < 1:
        problems.append(f"num_steps={cfg.num_steps} must be >= 1")
    if not 0 <= cfg.lam <= 1:
        problems.append(f"lambda={cfg.lam} must lie in [0, 1]")
    if not 0 <= cfg.gamma < 1:
        problems.append(f"gamma={cfg.gamma} must lie in [0, 1)")
    for key in ("eps_start", "eps_finish", "eps_decay"):
        v = getattr(cfg, key)
        if not 0 <= v <= 1:
            problems.append(f"{key}={v} must lie in [0, 1]")
    if cfg.num_minibatches < 1 or (cfg.num_envs * cfg.num_steps) % cfg.num_minibatches:
        problems.append(
            f"num_minibatches={cfg.num_minibatches} must divide num_envs*num_steps="
            f"{cfg.num_envs}*{cfg.num_steps}={cfg.num_envs * cfg.num_steps}")
    if cfg.norm_type not in NORM_TYPES:
        problems.append(f"norm_type={cfg.norm_type!r} must be one of {NORM_TYPES}")
    if cfg.lr < 0:
        problems.append("lr must be non-negative")
    if problems:
        raise ValueError("; ".join(problems))


@dataclass
class DqnConfig:
    num_envs: int = 1
    total_timesteps: int = 500_000
    buffer_size: int = 10_000
    batch_size: int = 128
    learning_starts: int = 10_000
    train_frequency: int = 10
    target_update_period: int = 500
    eps_start: float = 1.0
    eps_finish: float = 0.05
    eps_decay: float = 0.5
    gamma: float = 0.99
    lr: float = 2.5e-4
    max_grad_norm: float = 10.0
    norm_type: str = "none"
    norm_variant: str = "affine"
    hidden_size: int = 128
    num_layers: int = 2
    optimizer: str = "adam"
    eval_every: int = 10_000
    eval_episodes: int = 16

    def __post_init__(self):
        if self.buffer_size < self.batch_size:
            raise ValueError(f"buffer_size={self.buffer_size} is smaller than batch_size={self.batch_size}")
        if self.target_update_period < 1:
            raise ValueError("target_update_period must be >= 1")


@dataclass
class EnsembleConfig:
    ensemble_size: int = 20
    num_envs: int = 16
    max_episodes: int = 50_000
    buffer_size: int = 10_000
    batch_size: int = 128
    learning_starts: int = 128
    updates_per_step: int = 1
    gamma: float = 0.99
    lr: float = 1e-3
    max_grad_norm: float = 10.0
    epsilon: float = 0.0
    norm_type: str = "layer_norm"
    norm_variant: str = "affine"
    hidden_size: int = 50
    num_layers: int = 1
    optimizer: str = "adam"
    solve_window: int = 1000
    solve_threshold: float = 0.9
    stop_when_solved: bool = True
    identical_init: bool = False
    prior_scale: float = 3.0

    def __post_init__(self):
        if self.ensemble_size < 1:
            raise ValueError("ensemble_size must be >= 1")
        if self.prior_scale < 0:
            raise ValueError("prior_scale must be >= 0")


def config_keys(cls) -> list[str]:
    return [f.name for f in fields(cls)]
