#!/usr/bin/env python3
"""Run the full desk benchmark (3 losses x 4 scores x 4 OOD sets, 5 seeds)
and print the headline MSP comparison.

Usage: python scripts/run_desk_bench.py [--out DIR] [--epochs N] [--seeds 0,1,2]
"""

import argparse

from logitbench.harness import desk_config, run_experiment


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/desk")
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--seeds", default="0,1,2,3,4")
    args = ap.parse_args()

    seeds = tuple(int(s) for s in args.seeds.split(","))
    cfg = desk_config(seeds=seeds, epochs=args.epochs, output_dir=args.out)
    result = run_experiment(cfg, quiet=False)

    print(f"\nwrote {len(result.rows)} rows to {args.out}/bench.csv")
    print(f"{'loss':<14} {'score':<9} {'FPR95':>7} {'AUROC':>7} {'acc':>7}")
    for score in ("msp", "odin", "energy", "gradnorm"):
        for loss in ("cross_entropy", "logit_norm", "logit_penalty"):
            rows = [r for r in result.rows
                    if r.loss_name == loss and r.score_name == score]
            if not rows:
                continue
            fpr = sum(r.fpr95_mean for r in rows) / len(rows)
            roc = sum(r.auroc_mean for r in rows) / len(rows)
            acc = rows[0].id_accuracy_mean
            print(f"{loss:<14} {score:<9} {fpr:7.3f} {roc:7.3f} {acc:7.3f}")
    for w in result.warnings:
        print(f"WARNING: {w}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
