"""Small dense network stack: conv/pool/batchnorm/BLSTM/dense layers, AdaDelta
and CTC training."""

from .arch import (
    ConfigurationError,
    LayerSpec,
    desk_arch,
    fcrn_arch,
    field_position,
    micro_arch,
    output_shape,
    receptive_field,
    spatial_part,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .model import MissingCacheError, ModelParams, backward, forward, init_params
from .optim import OptimizerState, adadelta_step
from .train import Example, TrainConfig, TrainResult, train

__all__ = [
    "ConfigurationError", "LayerSpec", "desk_arch", "fcrn_arch", "field_position", "micro_arch",
    "output_shape", "receptive_field", "spatial_part", "load_checkpoint", "save_checkpoint",
    "MissingCacheError", "ModelParams", "backward", "forward", "init_params", "OptimizerState",
    "adadelta_step", "Example", "TrainConfig", "TrainResult", "train",
]
