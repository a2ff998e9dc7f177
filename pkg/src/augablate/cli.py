"""Command-line entry point: ``augablate <command> ...``."""

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

from . import rng as rngmod
from .augment import Crop, Scheme, apply_scheme, load_png, save_png
from .errors import AugablateError
from .rng import Rng


def _crop_arg(s):
    if s is None or s.lower() == "none":
        return None
    h, w = s.lower().split("x")
    return Crop(int(h), int(w))


def cmd_preview(args):
    img = load_png(args.inp)
    out = apply_scheme(img, Scheme(args.scheme, _crop_arg(args.crop)), Rng(args.seed, rngmod.PREVIEW))
    save_png(out, args.out)
    print(f"wrote {args.out} ({out.shape[0]}x{out.shape[1]})")


def cmd_train(args):
    from .harness.config import load_run_config
    from .harness.grid import load_datasets, run_one

    cfg = load_run_config(args.config)
    if args.workers:
        cfg = replace(cfg, workers=args.workers)
    os.makedirs(cfg.out, exist_ok=True)
    train_ds, test_ds = load_datasets(cfg)
    ckpt = os.path.join(cfg.out, "model.augb")
    rec = run_one(cfg, "train", train_ds, test_ds, checkpoint=ckpt)
    with open(os.path.join(cfg.out, "metrics.json"), "w") as f:
        json.dump(rec.__dict__, f, indent=1)
    for e in rec.history:
        print(f"epoch {e['epoch']:3d} lr {e['lr']:.5g} loss {e['loss']:.4f} acc {e['acc']:.4f}")
    if rec.status != "ok":
        print(rec.error, file=sys.stderr)
        return 1
    print(f"test_acc {rec.final_acc:.4f} tta_acc {rec.tta_acc:.4f} wall_s {rec.wall_s:.1f}")
    print(f"checkpoint {ckpt}")
    return 0


def cmd_evaluate(args):
    from .architectures import build
    from .harness.config import load_run_config
    from .harness.grid import load_datasets
    from .harness.train import evaluate, evaluate_tta
    from .nn.checkpoint import load_network

    cfg_path = args.config or os.path.splitext(args.checkpoint)[0] + ".cfg"
    cfg = load_run_config(cfg_path)
    if args.data:
        cfg = replace(cfg, data_dir=args.data)
    _, test_ds = load_datasets(cfg)
    net = load_network(args.checkpoint, build(cfg.arch_spec(), Rng(0)))
    acc = evaluate(net, test_ds, cfg.test_scheme(), cfg.eval_batch_size)
    print(f"single_view_acc {acc:.4f}")
    if args.tta:
        tta = evaluate_tta(net, test_ds, args.tta, Rng(cfg.seed, rngmod.TTA), batch_size=cfg.eval_batch_size)
        print(f"tta_acc {tta:.4f} (views={args.tta})")
    return 0


def cmd_ablate(args):
    from .harness.config import load_grid_config
    from .harness.grid import run_grid
    from .harness.report import emit_report

    grid = load_grid_config(args.grid)
    records = run_grid(grid, args.out, on_record=lambda r: print(
        f"{r.cell} seed {r.seed}: {r.status} final {r.final_acc:.4f} tta {r.tta_acc:.4f} ({r.wall_s:.0f}s)",
        flush=True))
    paths, _, _ = emit_report(records, os.path.join(args.out, "report"), grid.min_aug_gain, grid.max_reg_gap)
    with open(paths["summary"]) as f:
        print(f.read(), end="")
    return 0 if all(r.status == "ok" for r in records) else 1


def cmd_report(args):
    from .harness.grid import RESULTS_CSV, read_results_csv
    from .harness.report import emit_report

    path = args.results
    if os.path.isdir(path):
        path = os.path.join(path, RESULTS_CSV)
    records = read_results_csv(path)
    paths, _, _ = emit_report(records, args.out, args.min_aug_gain, args.max_reg_gap)
    with open(paths["summary"]) as f:
        print(f.read(), end="")
    for name, p in paths.items():
        print(f"{name}: {p}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="augablate", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("augment-preview", help="augment one PNG image")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--scheme", choices=["none", "light", "heavier"], required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--crop", default=None, help="HxW, optional")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_preview)

    s = sub.add_parser("train", help="train one configuration")
    s.add_argument("--config", required=True)
    s.add_argument("--workers", type=int, default=0, help="override augmentation workers")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", help="evaluate a checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--data", default=None, help="dataset directory (defaults to the run's data_dir)")
    s.add_argument("--config", default=None, help="run config (defaults to <checkpoint>.cfg)")
    s.add_argument("--tta", type=int, default=0, nargs="?", const=10)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("ablate", help="run an ablation grid")
    s.add_argument("--grid", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("report", help="aggregate a results directory")
    s.add_argument("--results", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--min-aug-gain", type=float, default=0.02)
    s.add_argument("--max-reg-gap", type=float, default=0.03)
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args) or 0
    except (AugablateError, FileNotFoundError) as e:
        print(f"augablate: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
