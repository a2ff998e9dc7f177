"""Augmented batch production, optionally overlapped with training.

With ``workers == 1`` batches are augmented inline by the consumer, which is
the serialized baseline.  With more workers a process pool augments up to
``prefetch`` batches ahead of the consumer; results are yielded strictly in
batch order.  Each image's augmentation stream is keyed by
``(seed, epoch, dataset index)``, so the produced batches are identical for
any worker count.
"""

import multiprocessing
from collections import deque
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .. import rng as rngmod
from ..augment import apply_scheme
from ..rng import Rng

_worker = {}


def augment_batch(images, index, scheme, seed, epoch):
    if scheme.kind == "none" and scheme.crop is None:
        return images[index].copy()
    return np.stack([
        apply_scheme(images[i], scheme, Rng(seed, rngmod.AUGMENT, epoch, int(i))) for i in index
    ])


def _init_worker(images, scheme, seed):
    _worker.update(images=images, scheme=scheme, seed=seed)


def _work(epoch, index):
    return augment_batch(_worker["images"], index, _worker["scheme"], _worker["seed"], epoch)


class BatchPipeline:
    """Bounded, order-preserving producer of augmented batches.

    Use as a context manager so the worker pool is shut down::

        with BatchPipeline(images, scheme, seed, workers=4) as pipe:
            for index, x in pipe.batches(epoch, batches):
                ...
    """

    def __init__(self, images, scheme, seed, workers=1, prefetch=4):
        self.images = images
        self.scheme = scheme
        self.seed = seed
        self.workers = workers
        self.prefetch = max(prefetch, 1)
        self._pool = None

    def __enter__(self):
        if self.workers > 1:
            ctx = multiprocessing.get_context("fork")
            self._pool = ProcessPoolExecutor(
                self.workers, mp_context=ctx, initializer=_init_worker,
                initargs=(self.images, self.scheme, self.seed),
            )
        return self

    def __exit__(self, *exc):
        if self._pool is not None:
            self._pool.shutdown(wait=True, cancel_futures=True)
            self._pool = None

    def batches(self, epoch, index_batches):
        """Yield ``(index, augmented images)`` for each index array, in order."""
        if self._pool is None:
            for index in index_batches:
                yield index, augment_batch(self.images, index, self.scheme, self.seed, epoch)
            return
        pending = deque()
        it = iter(index_batches)
        for index in it:
            pending.append((index, self._pool.submit(_work, epoch, index)))
            if len(pending) >= self.prefetch:
                break
        while pending:
            index, fut = pending.popleft()
            nxt = next(it, None)
            if nxt is not None:
                pending.append((nxt, self._pool.submit(_work, epoch, nxt)))
            yield index, fut.result()
