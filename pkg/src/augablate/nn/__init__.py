from . import functional
from .checkpoint import load_tensors, save_tensors
from .functional import counters, reset_counters, softmax, softmax_cross_entropy
from .init import he_normal, xavier_uniform
from .layers import (
    DECAYED,
    BatchNorm,
    Conv2D,
    Dense,
    Dropout,
    GlobalAvgPool,
    Layer,
    PreActResidual,
    ReLU,
    Sequential,
    SpatialAvgPool,
)
