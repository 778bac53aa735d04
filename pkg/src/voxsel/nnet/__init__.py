"""Feed-forward classifier with ten batch training algorithms."""
from .network import (
    NetworkParams,
    forward,
    init_network,
    jacobian,
    loss_and_gradient,
    n_params,
)
from .optimizers import ALGORITHMS, STOP_REASONS, OptimResult, TrainingError, levenberg_marquardt, lm_step
from .train import TrainConfig, TrainedNetwork, predict_labels, predict_proba, train

__all__ = [
    "ALGORITHMS",
    "STOP_REASONS",
    "NetworkParams",
    "OptimResult",
    "TrainConfig",
    "TrainedNetwork",
    "TrainingError",
    "forward",
    "init_network",
    "jacobian",
    "levenberg_marquardt",
    "lm_step",
    "loss_and_gradient",
    "n_params",
    "predict_labels",
    "predict_proba",
    "train",
]
