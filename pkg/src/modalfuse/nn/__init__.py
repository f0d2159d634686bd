"""Minimal neural-network engine: dense, 1-D conv, BiLSTM, and hybrids."""

from .estimators import NeuralNetEstimator
from .models import (
    ForwardResult,
    FusionModelSpec,
    ModelSpec,
    backward,
    forward,
    init_params,
    param_shapes,
)
from .train import (
    TrainConfig,
    TrainedModel,
    extract_features,
    load_model,
    loss_and_grad,
    loss_value,
    model_checksum,
    predict_label,
    predict_logits,
    predict_value,
    save_model,
    train,
)

__all__ = [
    "ForwardResult",
    "FusionModelSpec",
    "ModelSpec",
    "NeuralNetEstimator",
    "TrainConfig",
    "TrainedModel",
    "backward",
    "extract_features",
    "forward",
    "init_params",
    "load_model",
    "loss_and_grad",
    "loss_value",
    "model_checksum",
    "param_shapes",
    "predict_label",
    "predict_logits",
    "predict_value",
    "save_model",
    "train",
]
