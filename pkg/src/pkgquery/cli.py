"""Command-line interface: partition | run | bench | gen.

Exit codes for ``run``: 0 feasible, 2 infeasible, 3 time limit.
All randomness flows from --seed; identical invocations produce identical
status/objective output.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

from . import generate, paql
from .bench import bench_coverage, bench_scales, bench_tau
from .evaluate import (
    FEASIBLE,
    INFEASIBLE,
    METHOD_DIRECT,
    METHOD_SKETCHREFINE,
    TIME_LIMIT,
    EvalConfig,
    eval_direct,
    eval_sketchrefine,
)
from .ilp import ilp_to_paql, load_raw_ilp
from .partitioning import (
    PartitionParams,
    load_partitioning,
    partition,
    partition_with_epsilon,
    save_partitioning,
)
from .relation import load_csv, save_csv


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--time-limit-s", type=float, default=3600.0)
    parser.add_argument("--backtrack-limit", type=int, default=None)
    parser.add_argument("--recursion-threshold", type=int, default=None)
    parser.add_argument("--hybrid-sketch", choices=["on", "off"], default="on")


def _eval_config(args) -> EvalConfig:
    return EvalConfig(
        seed=args.seed,
        time_limit=args.time_limit_s,
        backtrack_limit=args.backtrack_limit,
        recursion_threshold=args.recursion_threshold,
        hybrid_sketch=args.hybrid_sketch == "on",
    )


def _parse_omega(text: str) -> float:
    if text.lower() in ("inf", "infinity"):
        return math.inf
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError("omega must be >= 0 or 'inf'")
    return value


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _float_list(text: str) -> list[float]:
    return [float(t) for t in _csv_list(text)]


def cmd_partition(args) -> int:
    rel = load_csv(args.input)
    attrs = tuple(_csv_list(args.attrs))
    if args.tau < 1:
        print("error: --tau must be >= 1", file=sys.stderr)
        return 2
    t0 = time.perf_counter()
    if args.epsilon is not None:
        if args.direction is None:
            print("error: --epsilon needs --direction min|max", file=sys.stderr)
            return 2
        p = partition_with_epsilon(rel, attrs, args.tau, args.epsilon, args.direction)
    else:
        p = partition(rel, PartitionParams(attrs, args.tau, args.omega))
    partition_ms = (time.perf_counter() - t0) * 1000.0
    save_partitioning(p, args.out)
    print(json.dumps({
        "groups": p.m, "tau": p.tau,
        "omega": "inf" if math.isinf(p.omega) else p.omega,
        "max_radius": float(p.radii.max()) if p.m else 0.0,
        "degenerate_groups": len(p.degenerate),
        "partition_ms": round(partition_ms, 3), "out": args.out,
    }))
    return 0


def cmd_run(args) -> int:
    rel = load_csv(args.input)
    q = paql.validate(paql.load_query(args.query), rel.schema)
    cfg = _eval_config(args)
    if args.method == METHOD_DIRECT:
        report = eval_direct(q, rel, cfg)
    else:
        if not args.partitioning:
            print("error: --method sketchrefine requires --partitioning",
                  file=sys.stderr)
            return 2
        p = load_partitioning(args.partitioning, rel)
        report = eval_sketchrefine(q, rel, p, cfg)
    print(json.dumps(report.to_json_dict(), indent=2))
    return {FEASIBLE: 0, INFEASIBLE: 2, TIME_LIMIT: 3}[report.status]


def cmd_bench(args) -> int:
    rel = load_csv(args.input)
    queries = []
    for path in args.queries:
        name = os.path.splitext(os.path.basename(path))[0]
        queries.append((name, paql.validate(paql.load_query(path), rel.schema)))
    methods = _csv_list(args.methods)
    cfg = _eval_config(args)

    if args.sweep == "scale":
        if args.partitioning:
            p = load_partitioning(args.partitioning, rel)
        elif args.attrs:
            p = partition(rel, PartitionParams(
                tuple(_csv_list(args.attrs)), args.tau or max(1, rel.n // 10),
                args.omega))
        elif METHOD_SKETCHREFINE in methods:
            print("error: bench needs --partitioning or --attrs", file=sys.stderr)
            return 2
        else:
            p = partition(rel, PartitionParams(rel.numeric_attrs(), max(1, rel.n)))
        report = bench_scales(rel, queries, p, methods, args.scales,
                              args.repetitions, cfg, seed=args.seed)
    elif args.sweep == "tau":
        attrs = _csv_list(args.attrs) if args.attrs else list(rel.numeric_attrs())
        report = bench_tau(rel, queries, attrs, args.tau_fractions,
                           args.repetitions, cfg,
                           include_direct=METHOD_DIRECT in methods)
    else:
        report = bench_coverage(rel, queries, args.coverages,
                                args.tau_fraction, args.repetitions, cfg)

    if args.out_json:
        report.write_json(args.out_json)
    if args.out_csv:
        report.write_csv(args.out_csv)
    print(json.dumps(report.to_json_dict()["ratios"], indent=2))
    return 0


def cmd_gen(args) -> int:
    rel = None
    if args.from_ilp:
        raw = load_raw_ilp(args.from_ilp)
        rel, q = ilp_to_paql(raw)
        save_csv(rel, args.out or "ilp_data.csv")
        out_query = args.out_query or "ilp_query.paql"
        with open(out_query, "w", encoding="utf-8") as fh:
            fh.write(paql.to_paql(q) + "\n")
        print(json.dumps({"csv": args.out or "ilp_data.csv", "query": out_query}))
        return 0
    if args.rows is not None:
        rel = generate.gen_dataset(
            args.rows, args.cols, args.seed, dist=args.dist,
            low=args.low, high=args.high, mean=args.mean, sigma=args.sigma)
        if not args.out:
            print("error: --rows needs --out for the CSV", file=sys.stderr)
            return 2
        save_csv(rel, args.out)
        print(json.dumps({"csv": args.out, "rows": rel.n,
                          "cols": len(rel.schema.attributes)}))
    if args.workload:
        if rel is None:
            if not args.input:
                print("error: --workload needs --input or --rows", file=sys.stderr)
                return 2
            rel = load_csv(args.input)
        queries = generate.gen_workload(
            rel, args.workload, args.seed, expected_size=args.expected_size,
            wide=args.wide)
        paths = generate.queries_to_files(queries, args.out_dir or "workload")
        print(json.dumps({"queries": paths}))
    if args.rows is None and not args.workload and not args.from_ilp:
        print("error: nothing to generate (--rows, --workload, or --from-ilp)",
              file=sys.stderr)
        return 2
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pkgquery",
        description="Evaluate package queries: declarative multiset answers "
                    "under collective constraints.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_part = sub.add_parser("partition", help="partition a dataset offline")
    p_part.add_argument("--input", required=True)
    p_part.add_argument("--attrs", required=True,
                        help="comma-separated numeric attributes")
    p_part.add_argument("--tau", type=int, required=True,
                        help="max tuples per group")
    p_part.add_argument("--omega", type=_parse_omega, default=math.inf,
                        help="radius limit (number or 'inf')")
    p_part.add_argument("--epsilon", type=float, default=None,
                        help="derive the radius limit from this approximation target")
    p_part.add_argument("--direction", choices=["min", "max"], default=None)
    p_part.add_argument("--out", required=True)
    _common_flags(p_part)
    p_part.set_defaults(func=cmd_partition)

    p_run = sub.add_parser("run", help="evaluate one query")
    p_run.add_argument("--method", choices=[METHOD_DIRECT, METHOD_SKETCHREFINE],
                       required=True)
    p_run.add_argument("--query", required=True, help=".paql file")
    p_run.add_argument("--input", required=True, help="dataset CSV")
    p_run.add_argument("--partitioning", default=None)
    _common_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_bench = sub.add_parser("bench", help="timed method comparison")
    p_bench.add_argument("--input", required=True)
    p_bench.add_argument("--queries", nargs="+", required=True)
    p_bench.add_argument("--methods", default="direct,sketchrefine")
    p_bench.add_argument("--partitioning", default=None)
    p_bench.add_argument("--attrs", default=None)
    p_bench.add_argument("--tau", type=int, default=None)
    p_bench.add_argument("--omega", type=_parse_omega, default=math.inf)
    p_bench.add_argument("--sweep", choices=["scale", "tau", "coverage"],
                         default="scale")
    p_bench.add_argument("--scales", type=_float_list, default=[1.0])
    p_bench.add_argument("--tau-fractions", type=_float_list,
                         default=[0.01, 0.1, 0.5])
    p_bench.add_argument("--coverages", type=_float_list, default=[0.5, 1.0, 1.5])
    p_bench.add_argument("--tau-fraction", type=float, default=0.1,
                         help="group-size fraction for the coverage sweep")
    p_bench.add_argument("--repetitions", type=int, default=10)
    p_bench.add_argument("--out-json", default=None)
    p_bench.add_argument("--out-csv", default=None)
    _common_flags(p_bench)
    p_bench.set_defaults(func=cmd_bench)

    p_gen = sub.add_parser("gen", help="synthetic data / workloads / ILP pairs")
    p_gen.add_argument("--rows", type=int, default=None)
    p_gen.add_argument("--cols", type=int, default=4)
    p_gen.add_argument("--dist", choices=["uniform", "normal"], default="uniform")
    p_gen.add_argument("--low", type=float, default=0.0)
    p_gen.add_argument("--high", type=float, default=1.0)
    p_gen.add_argument("--mean", type=float, default=0.0)
    p_gen.add_argument("--sigma", type=float, default=1.0)
    p_gen.add_argument("--out", default=None, help="dataset CSV path")
    p_gen.add_argument("--workload", type=int, default=None,
                       help="number of random queries to emit")
    p_gen.add_argument("--expected-size", type=int, default=5)
    p_gen.add_argument("--wide", action="store_true",
                       help="loose low-selectivity constraint windows")
    p_gen.add_argument("--out-dir", default=None)
    p_gen.add_argument("--input", default=None,
                       help="existing dataset for workload generation")
    p_gen.add_argument("--from-ilp", default=None,
                       help="raw ILP JSON to convert into a (csv, paql) pair")
    p_gen.add_argument("--out-query", default=None)
    _common_flags(p_gen)
    p_gen.set_defaults(func=cmd_gen)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
