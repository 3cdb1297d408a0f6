#!/usr/bin/env python3
"""Plots test error against network size from a sweep CSV.

Reads the per-cell records CSV written by `relulab sweep`, averages over
seeds, and draws one curve per (variant, stopping criterion). Lines starting
with # are schema comments and are skipped.
"""

import argparse
import collections
import csv
import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def load_records(path):
    rows = []
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    for row in csv.DictReader(lines):
        rows.append(
            {
                "variant": row["variant"],
                "h": int(row["H"]),
                "seed": int(row["seed"]),
                "test_final": float(row["test_error_final"]),
                "test_early": float(row["test_error_earlystop"]),
                "train_final": float(row["train_error_final"]),
            }
        )
    if not rows:
        raise SystemExit(f"{path}: no records")
    return rows


def mean_std(values):
    n = len(values)
    mu = sum(values) / n
    var = sum((v - mu) ** 2 for v in values) / n
    return mu, math.sqrt(var)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("csv", help="records CSV from the sweep subcommand")
    ap.add_argument("-o", "--out", default="sweep.png", help="output image")
    ap.add_argument(
        "--criterion",
        choices=["final", "early", "both"],
        default="both",
        help="which stopping criterion to draw",
    )
    args = ap.parse_args()

    records = load_records(args.csv)
    by_cell = collections.defaultdict(list)
    for r in records:
        by_cell[(r["variant"], r["h"])].append(r)

    variants = sorted({v for v, _ in by_cell})
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for variant in variants:
        hs = sorted(h for v, h in by_cell if v == variant)
        series = {"final": ("test_final", "-o"), "early": ("test_early", "--s")}
        wanted = ["final", "early"] if args.criterion == "both" else [args.criterion]
        for crit in wanted:
            field, style = series[crit]
            means, stds = [], []
            for h in hs:
                mu, sd = mean_std([r[field] for r in by_cell[(variant, h)]])
                means.append(mu)
                stds.append(sd)
            label = variant if args.criterion != "both" else f"{variant} ({crit})"
            ax.errorbar(hs, means, yerr=stds, fmt=style, capsize=3, label=label)

    ax.set_xscale("log", base=2)
    ax.set_xlabel("hidden units H")
    ax.set_ylabel("test error")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
