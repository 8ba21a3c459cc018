#!/usr/bin/env python3
"""Sweep the logit-norm temperature tau and report validation FPR95 per value.

Usage: python scripts/run_tau_sweep.py [--out DIR] [--epochs N] [--seeds 0]
       [--grid 0.001,0.005,0.01,0.05,0.5,1,2]
"""

import argparse

from logitbench.harness import desk_config, sweep_tau


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/sweep")
    ap.add_argument("--epochs", type=int, default=60)
    ap.add_argument("--seeds", default="0")
    ap.add_argument("--grid", default="0.001,0.005,0.01,0.05,0.5,1,2")
    args = ap.parse_args()

    seeds = tuple(int(s) for s in args.seeds.split(","))
    grid = [float(t) for t in args.grid.split(",")]
    cfg = desk_config(seeds=seeds, epochs=args.epochs, output_dir=args.out)
    rows, selected = sweep_tau(cfg, grid, out_dir=args.out)

    print(f"{'tau':>8} {'val FPR95':>10} {'train loss':>11}")
    for r in rows:
        mark = " <- selected" if r.tau == selected else ""
        print(f"{r.tau:8g} {r.val_fpr95_mean:10.4f} {r.final_train_loss_mean:11.4f}{mark}")
    swept = {r.tau for r in rows}
    for tau in grid:
        if tau not in swept:
            print(f"{tau:8g}   (all seeds diverged, excluded)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
