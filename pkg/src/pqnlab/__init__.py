"""Parallelised Q-learning with normalised networks, written in NumPy, plus TD stability probes.

Subpackages: ``net`` (MLPs with LayerNorm/BatchNorm and analytic backprop),
``optim`` (SGD, Adam, RAdam, clipping, head-weight l2), ``envs`` (vectorised
CartPole, Acrobot, DeepSea, Baird and tabular MDPs), ``agents`` (PQN, DQN,
bootstrapped ensemble), ``stability`` (TD Jacobians and probes) and
``harness`` (presets, CLI, metrics and plots).
"""

__version__ = "0.1.0"
