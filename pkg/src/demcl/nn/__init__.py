"""Small numpy neural-network engine: layers, sequential networks, losses, SGD, checkpoints."""

from .layers import (LAYER_KINDS, RBF, Conv2D, Dense, Flatten, Layer, LeakyReLU, MaxPool2D,
                     MultiScaleConv, ReLU, Sigmoid, Softmax, rbf_forward, softmax)
from .losses import cross_entropy, cross_entropy_grad, one_hot
from .network import Network
from .optim import sgd_step
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "LAYER_KINDS", "RBF", "Conv2D", "Dense", "Flatten", "Layer", "LeakyReLU", "MaxPool2D",
    "MultiScaleConv", "ReLU", "Sigmoid", "Softmax", "rbf_forward", "softmax",
    "cross_entropy", "cross_entropy_grad", "one_hot", "Network", "sgd_step",
    "load_checkpoint", "save_checkpoint",
]
