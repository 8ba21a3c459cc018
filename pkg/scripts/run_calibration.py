#!/usr/bin/env python3
"""Fit temperature scaling per loss and report pre/post ECE on the desk suite.

Usage: python scripts/run_calibration.py [--out DIR] [--epochs N] [--seed 0]
"""

import argparse

from logitbench.harness import desk_config, run_calibration


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/calibration")
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = desk_config(seeds=(args.seed,), epochs=args.epochs, output_dir=args.out)
    rows = run_calibration(cfg, out_dir=args.out)
    print(f"{'loss':<14} {'fitted T':>9} {'ECE pre':>9} {'ECE post':>9}")
    for r in rows:
        print(f"{r.loss_name:<14} {r.fitted_T:9.4f} {r.pre.ece:9.4f} {r.post.ece:9.4f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
