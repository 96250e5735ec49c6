#!/usr/bin/env python3
"""Default synthetic benchmark: XR, XR + fine-tuning, majority baseline and
gold-label skyline, averaged over seeds.

    python scripts/run_benchmark.py --seeds 1 2 3 4 5
    python scripts/run_benchmark.py --freeze tests/fixtures/benchmark_oracle.json
"""
import argparse
import json
import statistics
import time

from xrtransfer.harness import ExperimentConfig, run_cell

SYSTEMS = ("majority", "xr", "finetune", "skyline")
# margins (in macro-F1 points) checked by the acceptance suite
THRESHOLDS = {"xr_over_majority_min": 15.0, "skyline_over_xr_max": 10.0,
              "finetune_under_xr_max": 1.0}


def run(seeds):
    exp = ExperimentConfig()
    per_seed = {s: [] for s in SYSTEMS}
    for seed in seeds:
        cell = run_cell(exp, seed, extras=True)
        for s in SYSTEMS:
            per_seed[s].append(cell[s].macro_f1)
    return {s: {"macro_f1": v, "mean": statistics.fmean(v),
                "std": statistics.stdev(v) if len(v) > 1 else 0.0}
            for s, v in per_seed.items()}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    ap.add_argument("--freeze", help="write the results and thresholds as a JSON fixture")
    args = ap.parse_args()
    t0 = time.time()
    res = run(args.seeds)
    for s in SYSTEMS:
        print(f"{s:>9}: macro-F1 {100 * res[s]['mean']:6.2f} +- {100 * res[s]['std']:5.2f}")
    print(f"({time.time() - t0:.0f} s)")
    if args.freeze:
        doc = {"seeds": args.seeds, "thresholds": THRESHOLDS, "results": res}
        with open(args.freeze, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


if __name__ == "__main__":
    main()
