"""Accuracy on generated open-corridor groups at several target scales.

Prints max/avg error, rule-check status and runtime per case.
"""

import argparse
import time

from lenmatch.fixtures import open_corridor_group
from lenmatch.layout import new_violations
from lenmatch.pipeline import TuneConfig, tune_layout


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ratios", type=float, nargs="+", default=[50.0, 100.0, 200.0])
    ap.add_argument("--traces", type=int, default=8)
    ap.add_argument("--seeds", type=int, nargs="+", default=[7, 8, 9])
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    print(f"{'l_target/d_gap':>14} {'seed':>5} {'max err %':>10} {'avg err %':>10} {'new viol.':>9} {'time s':>8}")
    for ratio in args.ratios:
        for seed in args.seeds:
            lay = open_corridor_group(n_traces=args.traces, ratio=ratio, seed=seed)
            t0 = time.perf_counter()
            tuned, rep = tune_layout(lay, TuneConfig(threads=args.threads))
            dt = time.perf_counter() - t0
            mx, avg = rep.metrics["g0"]
            print(f"{ratio:14.0f} {seed:5d} {mx * 100:10.3f} {avg * 100:10.3f} {len(new_violations(tuned)):9d} {dt:8.2f}")


if __name__ == "__main__":
    main()
