"""Ablation grid runner with per-run persistence and resume."""

import csv
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field

from .. import rng as rngmod
from ..data import load_cifar, subset, synthetic_blobs
from ..errors import AugablateError
from ..nn.checkpoint import save_network
from ..rng import Rng
from .config import dump_run_config
from .train import evaluate, evaluate_tta, train

log = logging.getLogger(__name__)

RESULTS_CSV = "results.csv"
RECORDS_DIR = "records"
CHECKPOINTS_DIR = "checkpoints"


@dataclass
class ResultRecord:
    cell: str
    seed: int
    scheme: str
    regularized: bool
    history: list = field(default_factory=list)
    final_acc: float = float("nan")
    tta_acc: float = float("nan")
    wall_s: float = 0.0
    config_hash: str = ""
    status: str = "ok"
    error: str = ""

    def same_result(self, other):
        """Equality ignoring wall-clock time."""
        a, b = asdict(self), asdict(other)
        a.pop("wall_s")
        b.pop("wall_s")
        return a == b


def load_datasets(cfg):
    """(train, test) datasets described by a RunConfig."""
    if cfg.dataset == "synthetic":
        kw = dict(image_size=cfg.image_size, seed=cfg.subset_seed, noise=cfg.synthetic_noise)
        tr = synthetic_blobs(cfg.synthetic_classes, cfg.synthetic_train, **kw)
        te = synthetic_blobs(cfg.synthetic_classes, cfg.synthetic_test, split="test", **kw)
        return tr, te
    tr = load_cifar(cfg.data_dir, cfg.dataset, "train")
    te = load_cifar(cfg.data_dir, cfg.dataset, "test")
    if cfg.n_per_class:
        tr = subset(tr, cfg.n_per_class, cfg.subset_seed)
    if cfg.test_n_per_class:
        te = subset(te, cfg.test_n_per_class, cfg.subset_seed)
    return tr, te


def run_one(cfg, cell, train_ds, test_ds, checkpoint=None):
    """Train and evaluate a single configuration; failures become failed records."""
    rec = ResultRecord(cell, cfg.seed, cfg.scheme, cfg.regularized, config_hash=cfg.config_hash())
    t0 = time.perf_counter()
    try:
        net, history = train(cfg.arch_spec(), cfg.train_config(), train_ds, cfg.train_scheme(),
                             workers=cfg.workers, prefetch=cfg.prefetch)
        rec.history = history
        rec.final_acc = evaluate(net, test_ds, cfg.test_scheme(), cfg.eval_batch_size)
        rec.tta_acc = evaluate_tta(net, test_ds, cfg.tta, Rng(cfg.seed, rngmod.TTA),
                                   batch_size=cfg.eval_batch_size)
        if checkpoint:
            save_network(checkpoint, net)
            with open(os.path.splitext(checkpoint)[0] + ".cfg", "w") as f:
                f.write(dump_run_config(cfg))
    except (AugablateError, FloatingPointError, MemoryError) as e:
        rec.status = "failed"
        rec.error = f"{type(e).__name__}: {e}"
        log.warning("%s seed %d failed: %s", cell, cfg.seed, rec.error)
    rec.wall_s = time.perf_counter() - t0
    return rec


def _write_json(path, obj):
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        json.dump(obj, f, indent=1)
    os.replace(tmp, path)


def load_records(out_dir):
    d = os.path.join(out_dir, RECORDS_DIR)
    if not os.path.isdir(d):
        return {}
    out = {}
    for name in sorted(os.listdir(d)):
        if name.endswith(".json"):
            with open(os.path.join(d, name)) as f:
                rec = ResultRecord(**json.load(f))
            out[rec.config_hash] = rec
    return out


def run_grid(grid, out_dir, datasets=None, on_record=None):
    """Run every cell x seed of ``grid``, skipping runs already recorded as ok.

    Each finished run is written to ``records/<config_hash>.json`` and
    ``results.csv`` is rewritten, so an interrupted grid resumes where it
    stopped.  ``on_record`` is called with each newly produced record.
    """
    os.makedirs(os.path.join(out_dir, RECORDS_DIR), exist_ok=True)
    os.makedirs(os.path.join(out_dir, CHECKPOINTS_DIR), exist_ok=True)
    done = load_records(out_dir)
    records = []
    for cell, cfg in grid.cells():
        h = cfg.config_hash()
        prev = done.get(h)
        if prev is not None and prev.status == "ok":
            records.append(prev)
            continue
        if datasets is None:
            datasets = load_datasets(cfg)
        log.info("running %s seed %d (%s)", cell, cfg.seed, h)
        ckpt = os.path.join(out_dir, CHECKPOINTS_DIR, f"{cell}_s{cfg.seed}.augb")
        rec = run_one(cfg, cell, *datasets, checkpoint=ckpt)
        _write_json(os.path.join(out_dir, RECORDS_DIR, f"{h}.json"), asdict(rec))
        records.append(rec)
        write_results_csv(os.path.join(out_dir, RESULTS_CSV), records)
        if on_record is not None:
            on_record(rec)
    write_results_csv(os.path.join(out_dir, RESULTS_CSV), records)
    return records


def csv_columns(records):
    epochs = max((len(r.history) for r in records), default=0)
    per_epoch = [f"loss_e{e}" for e in range(epochs)] + [f"acc_e{e}" for e in range(epochs)]
    return ["cell", "seed", "scheme", "regularized", *per_epoch,
            "final_acc", "tta_acc", "wall_s", "config_hash", "status"]


def write_results_csv(path, records):
    cols = csv_columns(records)
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as f:
        w = csv.DictWriter(f, cols)
        w.writeheader()
        for r in records:
            row = {"cell": r.cell, "seed": r.seed, "scheme": r.scheme, "regularized": int(r.regularized),
                   "final_acc": repr(r.final_acc), "tta_acc": repr(r.tta_acc), "wall_s": f"{r.wall_s:.3f}",
                   "config_hash": r.config_hash, "status": r.status}
            for e in r.history:
                row[f"loss_e{e['epoch']}"] = repr(e["loss"])
                row[f"acc_e{e['epoch']}"] = repr(e["acc"])
            w.writerow(row)
    os.replace(tmp, path)


def read_results_csv(path):
    """Rows of a results CSV as ResultRecords (per-epoch loss/acc restored into history)."""
    out = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            history = []
            e = 0
            while row.get(f"loss_e{e}"):
                history.append({"epoch": e, "loss": float(row[f"loss_e{e}"]), "acc": float(row[f"acc_e{e}"])})
                e += 1
            out.append(ResultRecord(
                cell=row["cell"], seed=int(row["seed"]), scheme=row["scheme"],
                regularized=bool(int(row["regularized"])), history=history,
                final_acc=float(row["final_acc"]), tta_acc=float(row["tta_acc"]),
                wall_s=float(row["wall_s"]), config_hash=row["config_hash"], status=row["status"],
            ))
    return out
