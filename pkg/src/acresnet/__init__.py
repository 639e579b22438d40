"""acresnet: classic and accumulated residual networks on a small
from-scratch numpy autodiff engine."""

from .autodiff import Variable, backward, grad_check, no_grad
from .blocks import (BlockSpec, ResidualAccumulator, ResidualBlock,
                     accumulated_block_forward, classic_block_forward)
from .data import Dataset, load_cifar10, synthetic_dataset
from .estimator import ResidualNetClassifier
from .model import ModelSpec, build_model, load_weights, save_weights
from .training import TrainConfig, evaluate, summarize, train

__version__ = "0.1.0"

__all__ = [
    "Variable", "backward", "grad_check", "no_grad",
    "BlockSpec", "ResidualAccumulator", "ResidualBlock",
    "accumulated_block_forward", "classic_block_forward",
    "Dataset", "load_cifar10", "synthetic_dataset",
    "ResidualNetClassifier",
    "ModelSpec", "build_model", "load_weights", "save_weights",
    "TrainConfig", "evaluate", "summarize", "train",
    "__version__",
]
