from .io import load_network, load_weights, save_weights
from .network import (
    FloatModel,
    LayerDef,
    NetworkDef,
    WeightStore,
    check_weights,
    conv2d,
    copy_weights,
    evaluate_accuracy,
    evaluate_model,
    flatten,
    forward,
    fully_connected,
    init_weights,
    maxpool2d,
    predict,
    relu,
    simple_cnn,
)
from .train import TrainConfig, TrainResult, train_baseline

__all__ = [
    "FloatModel",
    "LayerDef",
    "NetworkDef",
    "TrainConfig",
    "TrainResult",
    "WeightStore",
    "check_weights",
    "conv2d",
    "copy_weights",
    "evaluate_accuracy",
    "evaluate_model",
    "flatten",
    "forward",
    "fully_connected",
    "init_weights",
    "load_network",
    "load_weights",
    "maxpool2d",
    "predict",
    "relu",
    "save_weights",
    "simple_cnn",
    "train_baseline",
]
