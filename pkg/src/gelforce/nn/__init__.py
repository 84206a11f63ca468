from .gradcheck import grad_check
from .io import WeightsFormatError, load_weights, save_weights, write_history
from .layers import (Conv2D, Dense, GlobalAvgPool, Layer, MaxPool2D, ReLU,
                     ResidualBlock, Tanh, kaiming_uniform)
from .network import Branch, Network, backward, forward, mse_loss
from .optim import AdamState, TrainingError, adam_step

__all__ = [
    "AdamState", "Branch", "Conv2D", "Dense", "GlobalAvgPool", "Layer",
    "MaxPool2D", "Network", "ReLU", "ResidualBlock", "Tanh", "TrainingError",
    "WeightsFormatError", "adam_step", "backward", "forward", "grad_check",
    "kaiming_uniform", "load_weights", "mse_loss", "save_weights",
    "write_history",
]
