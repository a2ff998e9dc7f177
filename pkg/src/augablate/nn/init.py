import math

import numpy as np


def fans(shape):
    """(fan_in, fan_out) for a (D, D, C, K) kernel or an (in, out) matrix."""
    if len(shape) == 2:
        return shape[0], shape[1]
    receptive = math.prod(shape[:-2])
    return receptive * shape[-2], receptive * shape[-1]


def xavier_uniform(shape, rng, dtype=np.float32):
    fan_in, fan_out = fans(shape)
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform_array(-limit, limit, shape).astype(dtype)


def he_normal(shape, rng, dtype=np.float32):
    fan_in, _ = fans(shape)
    return rng.normal_array(0.0, math.sqrt(2.0 / fan_in), shape).astype(dtype)


INITIALIZERS = {"xavier_uniform": xavier_uniform, "he_normal": he_normal}
