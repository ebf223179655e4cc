"""Lai loss: regression losses that weigh the error by the model's input slope."""

from .errors import (
    ConfigError,
    DimensionError,
    DivergenceError,
    EmptyBatch,
    IoError,
    LaiError,
    NonFiniteValue,
    ParseError,
    UnsupportedDepth,
)
from .lai_loss import LaiSpec, batch_lai_loss, batch_lai_loss_and_grad, factor_mae, factor_mse, lai_loss_highdim, lai_point_loss
from .mlp import MlpModel, init_model, predict, predict_with_input_grad
from .trainer import OptimizerConfig, TrainConfig, run_experiment

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DimensionError",
    "DivergenceError",
    "EmptyBatch",
    "IoError",
    "LaiError",
    "LaiSpec",
    "MlpModel",
    "NonFiniteValue",
    "OptimizerConfig",
    "ParseError",
    "TrainConfig",
    "UnsupportedDepth",
    "batch_lai_loss",
    "batch_lai_loss_and_grad",
    "factor_mae",
    "factor_mse",
    "init_model",
    "lai_loss_highdim",
    "lai_point_loss",
    "predict",
    "predict_with_input_grad",
    "run_experiment",
]
