"""Run and grid configuration, read from plain-text ``key = value`` files.

Syntax: one ``key = value`` per line; ``#`` starts a comment; blank lines are
ignored; keys are case-sensitive and must name a field of :class:`RunConfig`
(or, for grid files, :class:`GridConfig`).  Value forms:

* booleans: ``true/false``, ``yes/no``, ``on/off``, ``1/0``
* fractions: ``1/4`` or ``0.25`` (``width_scale``)
* lists: comma-separated (``seeds = 0, 1, 2``)
* schedule: comma-separated ``epoch:multiplier`` pairs (``23:0.1, 29:0.1``)
* crop: ``HxW`` or ``none``

A ``preset`` key, when present, is applied first; every other key in the
file then overrides the preset's value regardless of line order.
"""

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from typing import Optional

from ..architectures import (
    ALLCNN_INPUT_DROPOUT,
    ALLCNN_STRIDED_DROPOUT,
    WRN_BLOCK_DROPOUT,
    ArchitectureSpec,
    to_fraction,
)
from ..augment import Crop, Scheme
from ..errors import ConfigError
from ..optim import PRESETS, TrainConfig

TRAIN_FIELDS = {f.name for f in fields(TrainConfig)}
# fields that never change results, so they stay out of the config hash
VOLATILE = {"workers", "prefetch", "data_dir", "out", "eval_batch_size"}


@dataclass(frozen=True)
class RunConfig:
    # model
    arch: str = "allcnn-cifar"
    width_scale: Fraction = Fraction(1, 4)
    regularized: bool = False
    input_dropout: float = ALLCNN_INPUT_DROPOUT
    strided_dropout: float = ALLCNN_STRIDED_DROPOUT
    block_dropout: float = WRN_BLOCK_DROPOUT
    # data
    dataset: str = "cifar10"
    data_dir: str = "data"
    n_per_class: int = 400
    subset_seed: int = 0
    test_n_per_class: int = 0
    synthetic_train: int = 1000
    synthetic_test: int = 500
    synthetic_classes: int = 10
    synthetic_noise: float = 0.1
    image_size: int = 32
    scheme: str = "none"
    crop: Optional[tuple] = None
    # optimization; regularized runs use weight_decay, others train with 0
    preset: str = "desk"
    base_lr: float = 0.01
    schedule: tuple = ((23, 0.1), (29, 0.1), (34, 0.1))
    momentum: float = 0.9
    nesterov: bool = False
    weight_decay: float = 0.001
    batch_size: int = 128
    epochs: int = 40
    seed: int = 0
    # evaluation and execution
    tta: int = 10
    workers: int = 1
    prefetch: int = 4
    eval_batch_size: int = 250
    out: str = "runs"

    def __post_init__(self):
        object.__setattr__(self, "width_scale", to_fraction(self.width_scale))
        object.__setattr__(self, "schedule", tuple((int(e), float(m)) for e, m in self.schedule))
        if self.crop is not None:
            object.__setattr__(self, "crop", tuple(int(v) for v in self.crop))
        Scheme(self.scheme)
        if self.dataset not in ("cifar10", "cifar100", "synthetic"):
            raise ConfigError(f"unknown dataset {self.dataset!r}")
        if self.workers < 1 or self.prefetch < 1 or self.tta < 1:
            raise ConfigError("workers, prefetch and tta must be >= 1")

    @property
    def num_classes(self):
        return {"cifar10": 10, "cifar100": 100}.get(self.dataset, self.synthetic_classes)

    @property
    def input_shape(self):
        if self.crop:
            return (self.crop[0], self.crop[1], 3)
        side = self.image_size if self.dataset == "synthetic" else 32
        return (side, side, 3)

    def arch_spec(self):
        return ArchitectureSpec(
            self.arch, self.num_classes, self.width_scale, self.input_shape, self.regularized,
            input_dropout=self.input_dropout, strided_dropout=self.strided_dropout,
            block_dropout=self.block_dropout,
        )

    def train_config(self):
        return TrainConfig(
            base_lr=self.base_lr, schedule=self.schedule, momentum=self.momentum,
            nesterov=self.nesterov, weight_decay=self.weight_decay if self.regularized else 0.0,
            batch_size=self.batch_size, epochs=self.epochs, seed=self.seed,
        )

    def train_scheme(self):
        return Scheme(self.scheme, Crop(*self.crop) if self.crop else None)

    def test_scheme(self):
        return Scheme("none", Crop(*self.crop) if self.crop else None)

    def config_hash(self):
        d = {k: v for k, v in to_dict(self).items() if k not in VOLATILE}
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class GridConfig:
    base: RunConfig = field(default_factory=RunConfig)
    regularization: tuple = (True, False)
    schemes: tuple = ("none", "light", "heavier")
    seeds: tuple = (0, 1, 2)
    # thresholds of the qualitative checks in the report
    min_aug_gain: float = 0.02
    max_reg_gap: float = 0.03

    def cells(self):
        """``(cell_id, RunConfig)`` for every regularization x scheme x seed."""
        for reg in self.regularization:
            for scheme in self.schemes:
                for seed in self.seeds:
                    yield cell_id(reg, scheme), replace(self.base, regularized=reg, scheme=scheme, seed=seed)


def cell_id(regularized, scheme):
    return f"{'reg' if regularized else 'noreg'}-{scheme}"


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _list(s, conv):
    return tuple(conv(p) for p in (x.strip() for x in s.split(",")) if p)


def _schedule(s):
    out = []
    for part in _list(s, str):
        try:
            e, m = part.split(":")
            out.append((int(e), float(m)))
        except ValueError:
            raise ConfigError(f"bad schedule entry {part!r}; expected epoch:multiplier") from None
    return tuple(out)


def _crop(s):
    s = s.strip().lower()
    if s in ("", "none"):
        return None
    try:
        h, w = s.split("x")
        return (int(h), int(w))
    except ValueError:
        raise ConfigError(f"bad crop {s!r}; expected HxW or none") from None


PARSERS = {
    "width_scale": to_fraction,
    "regularized": _bool,
    "nesterov": _bool,
    "schedule": _schedule,
    "crop": _crop,
    "regularization": lambda s: _list(s, _bool),
    "schemes": lambda s: _list(s, str),
    "seeds": lambda s: _list(s, int),
}
SIMPLE = {int: int, float: float, str: str, "int": int, "float": float, "str": str}


def _convert(cls, key, raw):
    if key in PARSERS:
        return PARSERS[key](raw)
    types = {f.name: f.type for f in fields(cls)}
    if key not in types:
        raise ConfigError(f"unknown key {key!r}")
    conv = SIMPLE.get(types[key], str)
    try:
        return conv(raw.strip())
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def parse_pairs(text):
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        k, v = line.split("=", 1)
        k = k.strip()
        if k in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {k!r}")
        pairs[k] = v.strip()
    return pairs


def run_config_from_pairs(pairs):
    pairs = dict(pairs)
    values = {}
    name = pairs.get("preset")
    if name is not None:
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}")
        values.update(dataclasses.asdict(PRESETS[name]))
        values["preset"] = name
    for k, v in pairs.items():
        values[k] = _convert(RunConfig, k, v)
    try:
        return RunConfig(**values)
    except TypeError as e:
        raise ConfigError(str(e)) from None


def load_run_config(path):
    with open(path) as f:
        return run_config_from_pairs(parse_pairs(f.read()))


def load_grid_config(path):
    with open(path) as f:
        pairs = parse_pairs(f.read())
    grid_keys = {f.name for f in fields(GridConfig)} - {"base"}
    grid_vals = {k: _convert(GridConfig, k, pairs.pop(k)) for k in list(pairs) if k in grid_keys}
    return GridConfig(base=run_config_from_pairs(pairs), **grid_vals)


def to_dict(cfg):
    d = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, Fraction):
            v = str(v)
        elif isinstance(v, tuple):
            v = [list(x) if isinstance(x, tuple) else x for x in v]
        d[f.name] = v
    return d


def dump_run_config(cfg):
    """Render ``cfg`` back into the key-value syntax."""
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if f.name == "schedule":
            s = ", ".join(f"{e}:{m!r}" for e, m in v)
        elif f.name == "crop":
            s = "none" if v is None else f"{v[0]}x{v[1]}"
        elif isinstance(v, bool):
            s = "true" if v else "false"
        else:
            s = str(v)
        lines.append(f"{f.name} = {s}")
    return "\n".join(lines) + "\n"
