from .engine import (
    ShapeError,
    Tensor,
    abs_error,
    add,
    concat,
    conv1d,
    conv_transpose1d,
    crop,
    embedding,
    matmul,
    mean,
    mul,
    relu,
    squared_error,
    straight_through,
    transpose,
    tsum,
)
from .optim import Adam, adam_step

__all__ = [
    "Adam",
    "ShapeError",
    "Tensor",
    "abs_error",
    "adam_step",
    "add",
    "concat",
    "conv1d",
    "conv_transpose1d",
    "crop",
    "embedding",
    "matmul",
    "mean",
    "mul",
    "relu",
    "squared_error",
    "straight_through",
    "transpose",
    "tsum",
]
