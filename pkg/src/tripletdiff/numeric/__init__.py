from .adam import AdamState, adam_step
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .engine import (
    Graph,
    NonFiniteError,
    ShapeError,
    StaleGraphError,
    Tensor,
    add,
    causal_dilated_conv1d,
    channel_norm,
    concat_channels,
    conv1d,
    matmul,
    mean,
    mul,
    relu,
    sigmoid,
    slice_channels,
    total,
)

__all__ = [
    "AdamState",
    "adam_step",
    "CheckpointError",
    "load_checkpoint",
    "save_checkpoint",
    "Graph",
    "NonFiniteError",
    "ShapeError",
    "StaleGraphError",
    "Tensor",
    "add",
    "causal_dilated_conv1d",
    "channel_norm",
    "concat_channels",
    "conv1d",
    "matmul",
    "mean",
    "mul",
    "relu",
    "sigmoid",
    "slice_channels",
    "total",
]
