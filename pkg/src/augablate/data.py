"""CIFAR binary ingestion, class-balanced subsetting and synthetic datasets."""

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import rng as rngmod
from .errors import FormatError, SizeError
from .rng import Rng

CIFAR_SIDE = 32
CIFAR_PIXELS = CIFAR_SIDE * CIFAR_SIDE * 3
VARIANTS = {
    # label bytes per record, classes, train files, test files
    "cifar10": (1, 10, [f"data_batch_{i}.bin" for i in range(1, 6)], ["test_batch.bin"]),
    "cifar100": (2, 100, ["train.bin"], ["test.bin"]),
}
SUBDIRS = {"cifar10": "cifar-10-batches-bin", "cifar100": "cifar-100-binary"}


@dataclass
class Dataset:
    images: np.ndarray  # (N, H, W, C) float32 in [0, 1]
    labels: np.ndarray  # (N,) int64
    num_classes: int
    split: str = "train"
    coarse_labels: Optional[np.ndarray] = None

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise SizeError(f"{len(self.images)} images but {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise FormatError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self):
        return len(self.labels)

    @property
    def image_shape(self):
        return tuple(self.images.shape[1:])

    def take(self, index):
        index = np.asarray(index)
        coarse = None if self.coarse_labels is None else self.coarse_labels[index]
        return Dataset(self.images[index], self.labels[index], self.num_classes, self.split, coarse)


def decode_records(raw, variant):
    """Decode CIFAR binary records into a Dataset (split left as ``train``)."""
    label_bytes, classes, _, _ = VARIANTS[variant]
    rec = label_bytes + CIFAR_PIXELS
    if len(raw) == 0 or len(raw) % rec:
        raise FormatError(f"{variant}: {len(raw)} bytes is not a whole number of {rec}-byte records")
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(-1, rec)
    labels = arr[:, label_bytes - 1].astype(np.int64)
    coarse = arr[:, 0].astype(np.int64) if label_bytes == 2 else None
    if labels.max() >= classes:
        raise FormatError(f"{variant}: label {labels.max()} out of range [0, {classes})")
    # channel-planar (C, H, W) -> channel-last
    pixels = arr[:, label_bytes:].reshape(-1, 3, CIFAR_SIDE, CIFAR_SIDE).transpose(0, 2, 3, 1)
    images = pixels.astype(np.float32) / np.float32(255)
    return Dataset(images, labels, classes, coarse_labels=coarse)


def encode_records(ds, variant):
    """Inverse of :func:`decode_records`."""
    label_bytes, _, _, _ = VARIANTS[variant]
    n = len(ds)
    pixels = np.rint(ds.images * 255).astype(np.uint8).transpose(0, 3, 1, 2).reshape(n, -1)
    out = np.empty((n, label_bytes + CIFAR_PIXELS), dtype=np.uint8)
    if label_bytes == 2:
        coarse = ds.coarse_labels if ds.coarse_labels is not None else np.zeros(n, np.int64)
        out[:, 0] = coarse
    out[:, label_bytes - 1] = ds.labels
    out[:, label_bytes:] = pixels
    return out.tobytes()


def _resolve(path, variant, split):
    if os.path.isfile(path):
        return [path]
    _, _, train, test = VARIANTS[variant]
    names = train if split == "train" else test
    for base in (path, os.path.join(path, SUBDIRS[variant])):
        files = [os.path.join(base, n) for n in names]
        if all(os.path.isfile(f) for f in files):
            return files
    raise FileNotFoundError(f"no {variant} {split} files ({', '.join(names)}) under {path}")


def load_cifar(path, variant="cifar10", split="train"):
    """Load a CIFAR split from the published binary files.

    ``path`` is a directory holding the ``.bin`` files (or their standard
    extraction subdirectory), or a single ``.bin`` file.  Pixels are divided by
    255; no other normalization is applied.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown CIFAR variant {variant!r}")
    parts = []
    for f in _resolve(path, variant, split):
        with open(f, "rb") as fh:
            try:
                parts.append(decode_records(fh.read(), variant))
            except FormatError as e:
                raise FormatError(f"{f}: {e}") from None
    coarse = None
    if parts[0].coarse_labels is not None:
        coarse = np.concatenate([p.coarse_labels for p in parts])
    return Dataset(
        np.concatenate([p.images for p in parts]),
        np.concatenate([p.labels for p in parts]),
        parts[0].num_classes,
        split,
        coarse,
    )


def subset(ds, n_per_class, seed=0):
    """Class-balanced sample of ``n_per_class`` items per class, in original order."""
    rng = Rng(seed, rngmod.SUBSET)
    chosen = []
    for c in range(ds.num_classes):
        idx = np.flatnonzero(ds.labels == c)
        if n_per_class > len(idx):
            raise SizeError(f"class {c} has {len(idx)} items, fewer than n_per_class={n_per_class}")
        chosen.append(idx[rng.permutation(len(idx))[:n_per_class]])
    return ds.take(np.sort(np.concatenate(chosen)))


def synthetic_blobs(num_classes=10, n=500, image_size=32, seed=0, channels=3, noise=0.1, split="train"):
    """Class-conditional noisy copies of a smooth random prototype per class.

    Prototypes are fixed by ``seed``; the ``split`` only changes the noise, so
    train and test sets drawn with one seed share their classes.
    """
    h, w = (image_size, image_size) if np.isscalar(image_size) else image_size
    proto_rng = Rng(seed, rngmod.SYNTHETIC, 0)
    coarse = proto_rng.uniform_array(0.2, 0.8, (num_classes, 4, 4, channels))
    protos = np.repeat(np.repeat(coarse, -(-h // 4), axis=1), -(-w // 4), axis=2)[:, :h, :w]
    rng = Rng(seed, rngmod.SYNTHETIC, 1 if split == "train" else 2)
    labels = (np.arange(n) % num_classes)[rng.permutation(n)]
    images = protos[labels] + rng.normal_array(0.0, noise, (n, h, w, channels))
    return Dataset(np.clip(images, 0, 1).astype(np.float32), labels.astype(np.int64), num_classes, split)
