from .model import (
    NetConfig,
    NetEvaluator,
    NetParams,
    Prediction,
    TrainTarget,
    compute_gradients,
    compute_loss,
    forward,
    init_params,
    l2_penalty,
    loss,
    predict,
    sgd_step,
    tensor_shapes,
)
from .checkpoint import (
    CheckpointError,
    load_checkpoint,
    load_checkpoint_file,
    save_checkpoint,
    save_checkpoint_file,
)

__all__ = [
    "NetConfig",
    "NetEvaluator",
    "NetParams",
    "Prediction",
    "TrainTarget",
    "compute_gradients",
    "compute_loss",
    "forward",
    "init_params",
    "l2_penalty",
    "loss",
    "predict",
    "sgd_step",
    "tensor_shapes",
    "CheckpointError",
    "load_checkpoint",
    "load_checkpoint_file",
    "save_checkpoint",
    "save_checkpoint_file",
]
