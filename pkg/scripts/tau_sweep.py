#!/usr/bin/env python3
"""Group-size sweep: how the sketch-based method's runtime moves with tau.

Repartitions the dataset at several size thresholds (fractions of n) and
times the workload at each, with the direct method as a baseline line.
Extreme thresholds on either end should lose to an interior sweet spot.
"""

import argparse

from pkgquery.bench import bench_tau
from pkgquery.evaluate import EvalConfig
from pkgquery.generate import gen_dataset, gen_workload


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rows", type=int, default=50_000)
    ap.add_argument("--cols", type=int, default=4)
    ap.add_argument("--queries", type=int, default=5)
    ap.add_argument("--fractions", type=float, nargs="+",
                    default=[0.002, 0.01, 0.05, 0.1, 0.3, 1.0])
    ap.add_argument("--repetitions", type=int, default=2)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--out-csv", default=None)
    args = ap.parse_args()

    rel = gen_dataset(args.rows, args.cols, seed=args.seed,
                      low=0.5, high=2.0, grid=1 / 64)
    queries = [(f"q{i}", q) for i, q in enumerate(
        gen_workload(rel, args.queries, seed=args.seed + 1, expected_size=8))]

    report = bench_tau(rel, queries, tuple(rel.numeric_attrs()),
                       tau_fractions=args.fractions,
                       repetitions=args.repetitions,
                       cfg=EvalConfig(time_limit=300))

    by_frac = {}
    for pt in report.points:
        if pt.method == "sketchrefine":
            by_frac.setdefault(pt.scale, []).append(pt.median_ms or float("inf"))
    direct = [pt.median_ms for pt in report.points if pt.method == "direct"]
    if direct:
        print(f"direct baseline mean: {sum(direct) / len(direct):.2f} ms")
    print(f"{'tau_fraction':>14}{'mean_ms':>12}")
    for frac in sorted(by_frac):
        vals = by_frac[frac]
        print(f"{frac:>14}{sum(vals) / len(vals):>12.2f}")
    if args.out_csv:
        report.write_csv(args.out_csv)
        print(f"wrote {args.out_csv}")


if __name__ == "__main__":
    main()
