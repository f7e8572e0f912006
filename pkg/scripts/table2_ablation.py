"""Extension upper bound of DP versus the fixed-track baseline in a via-field corridor.

The corridor length for each d_gap/w row is fixed in units of d_gap
(l_original/d_gap), shrinking as the clearance grows.
"""

import argparse
import time

from lenmatch.extend import Environment, MeanderConfig, extension_upper_bound
from lenmatch.fixtures import via_corridor

ROWS = [(2.5, 24.89), (3.0, 21.33), (3.5, 18.67), (4.0, 16.59), (4.5, 14.93), (5.0, 13.57)]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--depth", type=int, default=1, help="meander-on-meander rounds (1 = single pass)")
    ap.add_argument("--svg", help="write the DP result of the last row to this file")
    args = ap.parse_args()
    print(f"{'d_gap/w':>7} {'l_orig/d_gap':>12} {'DP %':>9} {'baseline %':>11} {'ratio':>6} {'time s':>7}")
    last = None
    for ratio, l_over_gap in ROWS:
        lay = via_corridor(ratio, length=ratio * l_over_gap)
        env = Environment.build(area=[lay.dras[0].region], obstacles=lay.obstacles)
        t0 = time.perf_counter()
        dp, dp_trace = extension_upper_bound(lay.traces[0], env, lay.dras[0].rules,
                                             MeanderConfig(method="dp", max_depth=args.depth))
        base, _ = extension_upper_bound(lay.traces[0], env, lay.dras[0].rules,
                                        MeanderConfig(method="baseline", max_depth=args.depth))
        dt = time.perf_counter() - t0
        gain = dp / base if base > 0 else float("inf")
        print(f"{ratio:7.1f} {l_over_gap:12.2f} {dp * 100:9.2f} {base * 100:11.2f} {gain:6.2f} {dt:7.2f}")
        last = (lay, dp_trace)
    if args.svg and last:
        from dataclasses import replace

        from lenmatch.render import render_svg
        lay, t = last
        with open(args.svg, "w", encoding="utf-8") as fh:
            fh.write(render_svg(replace(lay, traces=[t]), scale=6))


if __name__ == "__main__":
    main()
