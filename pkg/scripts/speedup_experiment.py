#!/usr/bin/env python3
"""Timed comparison of both evaluation methods on a synthetic benchmark.

Generates a grid-quantized dataset, partitions it offline at tau = 10% of
the rows, runs a five-query workload under both methods, and prints a
result table plus per-query approximation ratios.
"""

import argparse
import statistics

from pkgquery.bench import bench_scales
from pkgquery.evaluate import EvalConfig
from pkgquery.generate import gen_dataset, gen_workload
from pkgquery.partitioning import PartitionParams, partition


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rows", type=int, default=50_000)
    ap.add_argument("--cols", type=int, default=4)
    ap.add_argument("--queries", type=int, default=5)
    ap.add_argument("--tau-fraction", type=float, default=0.1)
    ap.add_argument("--repetitions", type=int, default=3)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--out-csv", default=None)
    args = ap.parse_args()

    rel = gen_dataset(args.rows, args.cols, seed=args.seed,
                      low=0.5, high=2.0, grid=1 / 64)
    queries = [(f"q{i}", q) for i, q in enumerate(
        gen_workload(rel, args.queries, seed=args.seed + 1, expected_size=8))]
    tau = max(1, int(args.tau_fraction * rel.n))
    p = partition(rel, PartitionParams(tuple(rel.numeric_attrs()), tau))
    print(f"dataset: {rel.n} rows x {args.cols} cols; partitioning: "
          f"{p.m} groups at tau={tau}")

    report = bench_scales(rel, queries, p, ["direct", "sketchrefine"],
                          scales=[1.0], repetitions=args.repetitions,
                          cfg=EvalConfig(time_limit=300), seed=args.seed)

    print(f"{'query':<8}{'method':<14}{'median_ms':>12}{'status':>12}")
    medians = {}
    for pt in report.points:
        medians.setdefault(pt.method, []).append(pt.median_ms or float("inf"))
        print(f"{pt.query:<8}{pt.method:<14}{pt.median_ms or float('nan'):>12.2f}"
              f"{pt.status:>12}")
    for method, vals in medians.items():
        print(f"workload median [{method}]: {statistics.median(vals):.2f} ms")
    for query, summary in report.ratios.items():
        print(f"approximation ratio [{query}]: {summary['median']:.4f}")
    if args.out_csv:
        report.write_csv(args.out_csv)
        print(f"wrote {args.out_csv}")


if __name__ == "__main__":
    main()
