from .config import DqnConfig, EnsembleConfig, PqnConfig
from .core import epsilon_at, one_step_targets, q_lambda_targets, select_actions, td_loss_and_grads
from .dqn import ReplayBuffer, dqn_train
from .ensemble import ensemble_train
from .evaluate import EpisodeTracker, evaluate
from .pqn import build_network, minibatch_partition, pqn_train

__all__ = [
    "DqnConfig", "EnsembleConfig", "PqnConfig", "epsilon_at", "one_step_targets", "q_lambda_targets",
    "select_actions", "td_loss_and_grads", "ReplayBuffer", "dqn_train", "ensemble_train",
    "EpisodeTracker", "evaluate", "build_network", "minibatch_partition", "pqn_train",
]
