from .baird import BairdVecEnv, baird_build
from .base import VecEnv, instance_rng
from .classic import Acrobot, CartPole
from .deepsea import DeepSea, deepsea_mdp
from .tabular import SamplingDistribution, TabularMDP, TabularVecEnv, load_mdp, random_mdp, save_mdp, value_iteration

__all__ = [
    "VecEnv", "instance_rng", "BairdVecEnv", "baird_build", "Acrobot", "CartPole", "DeepSea",
    "deepsea_mdp", "SamplingDistribution", "TabularMDP", "TabularVecEnv", "load_mdp",
    "random_mdp", "save_mdp", "value_iteration", "make_env",
]


def make_env(name: str, num_envs: int = 1, **kw) -> VecEnv:
    if name == "cartpole":
        return CartPole(num_envs, **kw)
    if name == "acrobot":
        return Acrobot(num_envs, **kw)
    if name == "deepsea":
        return DeepSea(num_envs=num_envs, **kw)
    if name == "baird":
        return BairdVecEnv(num_envs, **kw)
    raise ValueError(f"unknown environment {name!r}")
