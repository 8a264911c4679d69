"""Compact UNet for binary FOV segmentation, implemented on plain numpy.

Everything here is hand-rolled (convolution, pooling, upsampling, dropout,
backprop, Adam) so gradients can be audited against finite differences.
"""

from .network import NetConfig, Network, unet_init, forward, parameter_count
from .network import save_checkpoint, load_checkpoint
from .training import TrainConfig, loss_bce, train, grad_check
from .inference import infer_mle, infer_mcd, binarize

__all__ = [
    "NetConfig", "Network", "unet_init", "forward", "parameter_count",
    "save_checkpoint", "load_checkpoint",
    "TrainConfig", "loss_bce", "train", "grad_check",
    "infer_mle", "infer_mcd", "binarize",
]
