"""Benchmark harness: timed method comparisons over scales, group-size
sweeps, and partitioning-coverage sweeps.

Response time covers translation plus solving only (materialization and
verification are excluded). Approximation ratios are reported only for
(query, scale) points where both methods produced a feasible package.
"""

from __future__ import annotations

import csv
import json
import statistics
import traceback
from dataclasses import dataclass, field
from typing import Optional, Sequence

from . import paql
from .evaluate import (
    FEASIBLE,
    METHOD_DIRECT,
    METHOD_SKETCHREFINE,
    EvalConfig,
    EvalReport,
    approximation_ratio,
    eval_direct,
    eval_sketchrefine,
)
from .partitioning import Partitioning, PartitionParams, partition, shrink_for_scaling
from .relation import Relation


class BenchError(Exception):
    pass


@dataclass
class BenchPoint:
    query: str
    method: str
    scale: float
    times_ms: list[float] = field(default_factory=list)
    status: str = "crashed"
    objective: Optional[float] = None
    failures: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def mean_ms(self) -> Optional[float]:
        return statistics.fmean(self.times_ms) if self.times_ms else None

    @property
    def median_ms(self) -> Optional[float]:
        return statistics.median(self.times_ms) if self.times_ms else None


@dataclass
class BenchReport:
    sweep: str
    points: list[BenchPoint]
    ratios: dict[str, dict]  # query -> {"mean": .., "median": .., "values": []}

    def to_json_dict(self) -> dict:
        return {
            "sweep": self.sweep,
            "points": [
                {
                    "query": p.query, "method": p.method, "scale": p.scale,
                    "mean_ms": p.mean_ms, "median_ms": p.median_ms,
                    "status": p.status, "objective": p.objective,
                    "failures": p.failures, **p.extra,
                }
                for p in self.points
            ],
            "ratios": self.ratios,
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["query", "method", "scale", "mean_ms", "median_ms",
                             "mean_ratio", "median_ratio", "failures"])
            for p in self.points:
                summary = self.ratios.get(p.query, {})
                writer.writerow([
                    p.query, p.method, p.scale,
                    "" if p.mean_ms is None else f"{p.mean_ms:.3f}",
                    "" if p.median_ms is None else f"{p.median_ms:.3f}",
                    "" if summary.get("mean") is None else f"{summary['mean']:.6f}",
                    "" if summary.get("median") is None else f"{summary['median']:.6f}",
                    p.failures,
                ])


def run_method(q: paql.PackageQuery, rel: Relation, p: Optional[Partitioning],
               method: str, cfg: EvalConfig) -> EvalReport:
    if method == METHOD_DIRECT:
        return eval_direct(q, rel, cfg)
    if method == METHOD_SKETCHREFINE:
        if p is None:
            raise BenchError("sketchrefine needs a partitioning")
        return eval_sketchrefine(q, rel, p, cfg)
    raise BenchError(f"unknown method {method!r}")


def _measure(q, rel, p, method, cfg, repetitions) -> BenchPoint:
    point = BenchPoint(query="", method=method, scale=0.0)
    for _ in range(max(repetitions, 1)):
        try:
            report = run_method(q, rel, p, method, cfg)
        except Exception:
            point.failures += 1
            point.extra.setdefault("error", traceback.format_exc(limit=1))
            continue
        point.times_ms.append(report.timings_ms.get("total_ms", 0.0))
        point.status = report.status
        point.objective = report.objective
        if report.status != FEASIBLE:
            point.failures += 1
    return point


def _summarize_ratios(points: list[BenchPoint],
                      directions: dict[str, str]) -> dict[str, dict]:
    """Per-query approximation ratios over points where both methods were
    feasible at the same scale."""
    by_key: dict[tuple[str, float], dict[str, BenchPoint]] = {}
    for p in points:
        by_key.setdefault((p.query, p.scale), {})[p.method] = p
    values: dict[str, list[float]] = {}
    for (query, _scale), methods in sorted(by_key.items()):
        d = methods.get(METHOD_DIRECT)
        s = methods.get(METHOD_SKETCHREFINE)
        if d is None or s is None or d.status != FEASIBLE or s.status != FEASIBLE:
            continue
        direction = directions.get(query)
        if direction is None:
            continue
        fake_d = EvalReport(METHOD_DIRECT, FEASIBLE, objective=d.objective)
        fake_s = EvalReport(METHOD_SKETCHREFINE, FEASIBLE, objective=s.objective)
        try:
            ratio = approximation_ratio(fake_d, fake_s, direction)
        except Exception:
            continue
        values.setdefault(query, []).append(ratio)
    out = {}
    for query, vals in values.items():
        out[query] = {"mean": statistics.fmean(vals),
                      "median": statistics.median(vals), "values": vals}
    return out


def _directions(queries: Sequence[tuple[str, paql.PackageQuery]]) -> dict[str, str]:
    return {name: q.objective.direction
            for name, q in queries if q.objective is not None}


def bench_scales(rel: Relation, queries: Sequence[tuple[str, paql.PackageQuery]],
                 p: Partitioning, methods: Sequence[str],
                 scales: Sequence[float] = (1.0,), repetitions: int = 10,
                 cfg: EvalConfig = EvalConfig(), seed: int = 0) -> BenchReport:
    """Scalability sweep: shrink the partitioned dataset to each fraction
    (partitioning memberships preserved) and time every query/method."""
    points = []
    for si, scale in enumerate(scales):
        p_s = shrink_for_scaling(p, scale, seed=seed + si)
        rel_s = rel.take(p_s.origin_ids)
        for name, q in queries:
            for method in methods:
                point = _measure(q, rel_s, p_s, method, cfg, repetitions)
                point.query, point.scale = name, scale
                points.append(point)
    return BenchReport("scale", points, _summarize_ratios(points, _directions(queries)))


def bench_tau(rel: Relation, queries: Sequence[tuple[str, paql.PackageQuery]],
              attrs: Sequence[str], tau_fractions: Sequence[float],
              repetitions: int = 3, cfg: EvalConfig = EvalConfig(),
              include_direct: bool = True) -> BenchReport:
    """Group-size sweep: repartition at each tau (a fraction of n) and time
    the sketch-based method; Direct runs once per query as the baseline.
    The CSV 'scale' column carries the tau fraction."""
    points = []
    if include_direct:
        for name, q in queries:
            point = _measure(q, rel, None, METHOD_DIRECT, cfg, repetitions)
            point.query, point.scale = name, 1.0
            points.append(point)
    for frac in tau_fractions:
        tau = max(1, int(round(frac * rel.n)))
        p = partition(rel, PartitionParams(tuple(attrs), tau))
        for name, q in queries:
            point = _measure(q, rel, p, METHOD_SKETCHREFINE, cfg, repetitions)
            point.query, point.scale = name, frac
            point.extra["tau"] = tau
            points.append(point)
    return BenchReport("tau", points, _summarize_ratios(points, _directions(queries)))


def bench_coverage(rel: Relation, queries: Sequence[tuple[str, paql.PackageQuery]],
                   coverages: Sequence[float], tau_fraction: float = 0.1,
                   repetitions: int = 3, cfg: EvalConfig = EvalConfig()
                   ) -> BenchReport:
    """Partitioning-coverage sweep: partition on subsets/supersets of each
    query's attributes, reporting time relative to exact coverage. The CSV
    'scale' column carries the coverage ratio."""
    tau = max(1, int(round(tau_fraction * rel.n)))
    all_numeric = list(rel.numeric_attrs())
    points = []
    for name, q in queries:
        q_attrs = sorted(q.attrs_used())
        if not q_attrs:
            continue
        extras = [a for a in all_numeric if a not in q_attrs]
        base_time = None
        for cov in sorted(coverages):
            want = max(1, int(round(cov * len(q_attrs))))
            if want <= len(q_attrs):
                attrs = tuple(q_attrs[:want])
            else:
                attrs = tuple(q_attrs + extras[:want - len(q_attrs)])
            actual_cov = len(attrs) / len(q_attrs)
            p = partition(rel, PartitionParams(attrs, tau))
            point = _measure(q, rel, p, METHOD_SKETCHREFINE, cfg, repetitions)
            point.query, point.scale = name, actual_cov
            point.extra["attrs"] = ",".join(attrs)
            if abs(actual_cov - 1.0) < 1e-9 and point.median_ms:
                base_time = point.median_ms
            points.append(point)
        if base_time:
            for point in points:
                if point.query == name and point.median_ms:
                    point.extra["time_ratio_vs_cov1"] = point.median_ms / base_time
    return BenchReport("coverage", points, {})
