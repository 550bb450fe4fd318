"""Windowed-transformer image restoration, self-contained on numpy.

Subpackages: tensor (autodiff engine), windows/attention/model (the
network), losses/metrics, imageio/degrade (data pipeline), train
(optimizer and gradient checks), cli (batch front end).
"""
from .model import (SwinIRConfig, ModelParams, classical_sr_config,
                    lightweight_sr_config, denoise_config, car_config,
                    tiny_config, init_params, forward, param_count,
                    count_mult_adds)
from .tensor import Tensor, no_grad

__all__ = [
    "SwinIRConfig", "ModelParams", "classical_sr_config",
    "lightweight_sr_config", "denoise_config", "car_config", "tiny_config",
    "init_params", "forward", "param_count", "count_mult_adds",
    "Tensor", "no_grad",
]

__version__ = "0.1.0"
