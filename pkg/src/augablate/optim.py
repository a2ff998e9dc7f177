"""SGD with classical or Nesterov momentum, coupled weight decay and step schedules."""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, ShapeError
from .nn import functional as F


@dataclass(frozen=True)
class TrainConfig:
    base_lr: float = 0.01
    # (epoch, multiplier) pairs; the multiplier takes effect at that 0-indexed epoch
    schedule: tuple = ()
    momentum: float = 0.9
    nesterov: bool = False
    weight_decay: float = 0.0
    batch_size: int = 128
    epochs: int = 1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "schedule", tuple((int(e), float(m)) for e, m in self.schedule))
        if not self.base_lr > 0:
            raise ConfigError("base_lr must be positive")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")
        epochs = [e for e, _ in self.schedule]
        if any(b <= a for a, b in zip(epochs, epochs[1:])):
            raise ConfigError(f"schedule epochs must be strictly increasing, got {epochs}")


PRESETS = {
    "allcnn-cifar": TrainConfig(
        base_lr=0.01, schedule=((200, 0.1), (250, 0.1), (300, 0.1)), momentum=0.9,
        weight_decay=0.001, batch_size=128, epochs=350,
    ),
    "allcnn-imagenet": TrainConfig(
        base_lr=0.01, schedule=((10, 0.1), (20, 0.1)), momentum=0.9,
        weight_decay=0.001, batch_size=64, epochs=25,
    ),
    "wrn-cifar": TrainConfig(
        base_lr=0.1, schedule=((60, 0.2), (120, 0.2), (160, 0.2)), momentum=0.9, nesterov=True,
        weight_decay=0.0005, batch_size=128, epochs=200,
    ),
    "wrn-imagenet": TrainConfig(
        base_lr=0.1, schedule=((8, 0.2), (15, 0.2)), momentum=0.9, nesterov=True,
        weight_decay=0.0005, batch_size=32, epochs=20,
    ),
    # All-CNN CIFAR shrunk to 40 epochs with the decay points scaled to match
    "desk": TrainConfig(
        base_lr=0.01, schedule=((23, 0.1), (29, 0.1), (34, 0.1)), momentum=0.9,
        weight_decay=0.001, batch_size=128, epochs=40,
    ),
}


def preset(name, **overrides):
    try:
        cfg = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}") from None
    return replace(cfg, **overrides)


def lr_at_epoch(cfg, epoch):
    lr = cfg.base_lr
    for e, mult in cfg.schedule:
        if e <= epoch:
            lr *= mult
    return lr


@dataclass
class OptState:
    velocity: dict = field(default_factory=dict)


def sgd_step(params, grads, state, cfg, lr, decayed=None):
    """Update ``params`` in place.

    ``params`` and ``grads`` map names to arrays; ``decayed`` names the
    parameters that take weight decay (all of them when ``None``).
    """
    mu = cfg.momentum
    lam = cfg.weight_decay
    for name, w in params.items():
        g = grads[name]
        if g.shape != w.shape:
            raise ShapeError(f"{name}: gradient shape {g.shape} != parameter shape {w.shape}")
        if lam and (decayed is None or name in decayed):
            F.counters["weight_decay_updates"] += 1
            g = g + lam * w
        if mu == 0:
            w -= lr * g
            continue
        v = state.velocity.get(name)
        if v is None:
            v = state.velocity[name] = np.zeros_like(w)
        v *= mu
        v -= lr * g
        if cfg.nesterov:
            w += mu * v - lr * g
        else:
            w += v
    return params, state
