"""Training loop and evaluation."""

import logging
import math
import time

import numpy as np

from .. import rng as rngmod
from ..architectures import build
from ..augment import Scheme, apply_scheme
from ..errors import DivergenceError
from ..nn.functional import softmax_cross_entropy
from ..optim import OptState, lr_at_epoch, sgd_step
from ..rng import Rng
from .pipeline import BatchPipeline

log = logging.getLogger(__name__)

LIGHT = Scheme("light")


def epoch_batches(n, batch_size, seed, epoch):
    """Shuffled index batches for one epoch; a trailing batch of one is dropped (batch norm)."""
    order = Rng(seed, rngmod.SHUFFLE, epoch).permutation(n)
    out = [order[i : i + batch_size] for i in range(0, n, batch_size)]
    if len(out) > 1 and len(out[-1]) < 2:
        out.pop()
    return out


def train(arch, cfg, dataset, scheme, workers=1, prefetch=4, net=None, callback=None, max_batches=None):
    """Mini-batch SGD on ``dataset`` with fresh augmentation every epoch.

    ``arch`` is an ArchitectureSpec, ``cfg`` a TrainConfig; ``cfg.seed`` keys
    initialization, shuffling, augmentation and dropout.  Returns
    ``(network, history)`` where history holds one dict per epoch.
    ``max_batches`` truncates every epoch (for calibration runs).
    """
    seed = cfg.seed
    if net is None:
        net = build(arch, Rng(seed, rngmod.INIT))
    params = net.parameters()
    decayed = net.decayed()
    state = OptState()
    history = []
    with BatchPipeline(dataset.images, scheme, seed, workers, prefetch) as pipe:
        for epoch in range(cfg.epochs):
            lr = lr_at_epoch(cfg, epoch)
            batches = epoch_batches(len(dataset), cfg.batch_size, seed, epoch)
            if max_batches is not None:
                batches = batches[:max_batches]
            total_loss = 0.0
            correct = 0
            seen = 0
            for b, (index, x) in enumerate(pipe.batches(epoch, batches)):
                y = dataset.labels[index]
                logits = net.forward(x, train=True, rng=Rng(seed, rngmod.DROPOUT, epoch, b))
                loss, grad = softmax_cross_entropy(logits, y)
                if not math.isfinite(loss):
                    raise DivergenceError(f"non-finite loss at epoch {epoch}, batch {b}")
                grads = net.backward(grad.astype(logits.dtype))
                sgd_step(params, grads, state, cfg, lr, decayed)
                total_loss += loss * len(index)
                correct += int((logits.argmax(axis=1) == y).sum())
                seen += len(index)
            entry = {"epoch": epoch, "lr": lr, "loss": total_loss / seen, "acc": correct / seen}
            history.append(entry)
            log.info("epoch %d lr %.5g loss %.4f acc %.4f", epoch, lr, entry["loss"], entry["acc"])
            if callback is not None:
                callback(entry)
    return net, history


def _views(images, scheme, rng, view, offset):
    return np.stack([apply_scheme(img, scheme, rng.child(view, offset + i)) for i, img in enumerate(images)])


def predict_views(net, dataset, n=10, rng=None, scheme=LIGHT, batch_size=250):
    """Softmax posteriors averaged over ``n`` augmented views of every image.

    View ``v`` of image ``i`` draws from ``rng.child(v, i)``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = rng if rng is not None else Rng(0, rngmod.TTA)
    total = None
    for v in range(n):
        chunks = []
        for i in range(0, len(dataset), batch_size):
            x = _views(dataset.images[i : i + batch_size], scheme, rng, v, i)
            chunks.append(net.predict_proba(x, batch_size))
        probs = np.concatenate(chunks).astype(np.float64)
        total = probs if total is None else total + probs
    return total / n


def evaluate_tta(net, dataset, n=10, rng=None, scheme=LIGHT, batch_size=250):
    """Accuracy of the argmax of posteriors averaged over ``n`` light views."""
    probs = predict_views(net, dataset, n, rng, scheme, batch_size)
    return float(np.mean(probs.argmax(axis=1) == dataset.labels))


def evaluate(net, dataset, scheme=None, batch_size=250):
    """Single-view accuracy (center crop only if ``scheme`` carries one)."""
    if scheme is not None and scheme.crop is not None:
        x = np.stack([apply_scheme(img, scheme, None) for img in dataset.images])
    else:
        x = dataset.images
    probs = net.predict_proba(x, batch_size)
    return float(np.mean(probs.argmax(axis=1) == dataset.labels))


def timed(fn, *args, **kwargs):
    t = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t
