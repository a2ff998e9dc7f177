"""Aggregate grid results into a table, bar data, a gap summary and a figure."""

import csv
import os
from dataclasses import dataclass

import numpy as np

from ..augment import SCHEMES
from ..errors import UsageError
from .grid import write_results_csv

# shades from no augmentation (lightest) to heavier (darkest)
COLORS = {
    True: ("#f4a6a6", "#e05252", "#a31515"),
    False: ("#c9b3e6", "#8e63c9", "#4b2386"),
}


@dataclass
class Bar:
    regularized: bool
    scheme: str
    n: int
    tta_mean: float
    tta_min: float
    tta_max: float
    final_mean: float
    final_min: float
    final_max: float


def aggregate(records):
    """One Bar per (regularized, scheme) present, over successful records."""
    ok = [r for r in records if r.status == "ok"]
    bars = []
    for reg in (True, False):
        for scheme in SCHEMES:
            rs = [r for r in ok if r.regularized == reg and r.scheme == scheme]
            if not rs:
                continue
            tta = np.array([r.tta_acc for r in rs])
            fin = np.array([r.final_acc for r in rs])
            bars.append(Bar(reg, scheme, len(rs), float(tta.mean()), float(tta.min()), float(tta.max()),
                            float(fin.mean()), float(fin.min()), float(fin.max())))
    return bars


def _find(bars, reg, scheme):
    for b in bars:
        if b.regularized == reg and b.scheme == scheme:
            return b
    return None


def gaps(bars):
    """Regularized minus unregularized mean TTA accuracy, per scheme with both legs."""
    out = {}
    for scheme in SCHEMES:
        a, b = _find(bars, True, scheme), _find(bars, False, scheme)
        if a and b:
            out[scheme] = a.tta_mean - b.tta_mean
    return out


def check_claims(bars, min_aug_gain=0.02, max_reg_gap=0.03):
    """Evaluate the two qualitative claims on mean TTA accuracy.

    aug_gain: (no-reg, light) minus (no-reg, none), must be >= ``min_aug_gain``.
    reg_gap: |(no-reg, light) - (reg, light)|, must be <= ``max_reg_gap``.
    A claim whose bars are missing is reported as None.
    """
    nl, nn, rl = _find(bars, False, "light"), _find(bars, False, "none"), _find(bars, True, "light")
    out = {"aug_gain": None, "aug_gain_ok": None, "reg_gap": None, "reg_gap_ok": None}
    if nl and nn:
        out["aug_gain"] = nl.tta_mean - nn.tta_mean
        out["aug_gain_ok"] = out["aug_gain"] >= min_aug_gain
    if nl and rl:
        out["reg_gap"] = abs(nl.tta_mean - rl.tta_mean)
        out["reg_gap_ok"] = out["reg_gap"] <= max_reg_gap
    return out


def write_bars(path, bars):
    cols = ["regularized", "scheme", "n", "tta_mean", "tta_min", "tta_max",
            "final_mean", "final_min", "final_max"]
    with open(path, "w", newline="") as f:
        w = csv.writer(f, delimiter="\t")
        w.writerow(cols)
        for b in bars:
            w.writerow([int(b.regularized), b.scheme, b.n] + [repr(getattr(b, c)) for c in cols[3:]])


def summary_lines(bars, claims):
    g = gaps(bars)
    lines = []
    for scheme, d in g.items():
        lines.append(f"scheme={scheme} reg={_find(bars, True, scheme).tta_mean:.4f} "
                     f"noreg={_find(bars, False, scheme).tta_mean:.4f} gap={100 * d:+.2f} pp")
    if g:
        lines.append("regularized minus unregularized TTA accuracy: "
                     + ", ".join(f"{s} {100 * d:+.2f} pp" for s, d in g.items()))
    for key in ("aug_gain", "reg_gap"):
        if claims[key] is not None:
            verdict = "pass" if claims[key + "_ok"] else "fail"
            lines.append(f"{key}={100 * claims[key]:.2f} pp {verdict}")
    return lines


def plot_bars(path, bars):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(8, 4))
    width = 0.25
    for gi, reg in enumerate((True, False)):
        for si, scheme in enumerate(SCHEMES):
            b = _find(bars, reg, scheme)
            if b is None:
                continue
            x = gi + (si - 1) * width
            err = [[100 * (b.tta_mean - b.tta_min)], [100 * (b.tta_max - b.tta_mean)]]
            ax.bar(x, 100 * b.tta_mean, width, color=COLORS[reg][si], yerr=err, capsize=3,
                   label=f"{'with' if reg else 'without'} reg., {scheme}")
    ax.set_xticks([0, 1])
    ax.set_xticklabels(["weight decay + dropout", "no explicit reg."])
    ax.set_ylabel("test accuracy, TTA (%)")
    lo = min((b.tta_min for b in bars), default=0)
    ax.set_ylim(max(0, 100 * lo - 10), 100)
    ax.legend(fontsize=7, loc="upper left", bbox_to_anchor=(1.01, 1))
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def emit_report(records, out_dir, min_aug_gain=0.02, max_reg_gap=0.03, figure=True):
    """Write results.csv, bars.tsv, summary.txt and (optionally) figure.png into ``out_dir``."""
    if not records:
        raise UsageError("no records to report")
    os.makedirs(out_dir, exist_ok=True)
    bars = aggregate(records)
    claims = check_claims(bars, min_aug_gain, max_reg_gap)
    paths = {
        "results": os.path.join(out_dir, "results.csv"),
        "bars": os.path.join(out_dir, "bars.tsv"),
        "summary": os.path.join(out_dir, "summary.txt"),
    }
    write_results_csv(paths["results"], records)
    write_bars(paths["bars"], bars)
    with open(paths["summary"], "w") as f:
        f.write("\n".join(summary_lines(bars, claims)) + "\n")
    if figure and bars:
        paths["figure"] = os.path.join(out_dir, "figure.png")
        plot_bars(paths["figure"], bars)
    return paths, bars, claims


def read_bars(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f, delimiter="\t"))
    return [Bar(bool(int(r["regularized"])), r["scheme"], int(r["n"]),
                *(float(r[c]) for c in ("tta_mean", "tta_min", "tta_max", "final_mean", "final_min", "final_max")))
            for r in rows]
