"""From-scratch 1D convolutional networks (Type-A and Type-B)."""

from .layers import (
    bce_with_logits,
    conv1d_backward,
    conv1d_forward,
    maxpool_backward,
    maxpool_forward,
    mse,
)
from .network import (
    LayerSpec,
    NetworkSpec,
    TrainingDivergence,
    default_spec,
    init_params,
    network_backward,
    network_forward,
)
from .optim import OptimizerState, adam_step
from .train import TrainConfig, TrainedNetwork, load_network, save_network, train

__all__ = [
    "LayerSpec",
    "NetworkSpec",
    "OptimizerState",
    "TrainConfig",
    "TrainedNetwork",
    "TrainingDivergence",
    "adam_step",
    "bce_with_logits",
    "conv1d_backward",
    "conv1d_forward",
    "default_spec",
    "init_params",
    "load_network",
    "maxpool_backward",
    "maxpool_forward",
    "mse",
    "network_backward",
    "network_forward",
    "save_network",
    "train",
]
