#!/usr/bin/env python3
"""Sweeps over k, unlabeled-corpus size and source-train size on the
synthetic benchmark; writes results.csv / aggregate.csv per sweep.

    python scripts/run_sweeps.py --out sweeps/ [--workers 4]
"""
import argparse
import os
import time

from xrtransfer.harness import run_experiment

SWEEPS = {"k": [5, 100, 450], "unlabeled_size": [500, 2500, 5000],
          "source_train_size": [0, 100, 1000]}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="sweeps")
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--only", choices=sorted(SWEEPS))
    args = ap.parse_args()
    for name, values in SWEEPS.items():
        if args.only and name != args.only:
            continue
        t0 = time.time()
        _, agg = run_experiment(name, values, args.seeds, out_dir=os.path.join(args.out, name),
                                workers=args.workers)
        for row in agg:
            print(f"{name}={row[1]:>5}: macro-F1 {100 * row[5]:6.2f} +- {100 * row[6]:5.2f}")
        print(f"  ({time.time() - t0:.0f} s)")


if __name__ == "__main__":
    main()
