"""Offline quad-tree partitioning of a relation into groups of similar tuples.

Groups satisfy a size threshold (tau) and a radius limit (omega): the
radius of a group is the largest per-attribute absolute deviation of any
member from the group's centroid. Splitting pivots on the centroid and
distributes members over up to 2^k sub-quadrants (value < centroid goes
low, >= goes high). Groups of identical points that still violate tau are
flagged degenerate instead of being split forever.

Representatives are group centroids. The radius limit for a target
approximation factor is the minimum over groups and partitioning
attributes of gamma * |representative value|, with gamma = eps for
maximization objectives and eps / (1 + eps) for minimization.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .relation import NUMERIC, Relation

MAXIMIZE_DIRECTION = "max"
MINIMIZE_DIRECTION = "min"


class PartitionError(Exception):
    pass


@dataclass(frozen=True)
class PartitionParams:
    attrs: tuple[str, ...]
    tau: int
    omega: float = math.inf

    def __post_init__(self):
        if not self.attrs:
            raise PartitionError("need at least one partitioning attribute")
        if self.tau < 1:
            raise PartitionError(f"size threshold must be >= 1, got {self.tau}")
        if self.omega < 0:
            raise PartitionError(f"radius limit must be >= 0, got {self.omega}")


@dataclass(frozen=True)
class Partitioning:
    """Group assignment over tuple ids plus per-group statistics.

    ``gid`` maps tuple id -> 1-based group index (0 = not covered, which
    only happens for partitionings restricted to a tuple subset).
    ``groups[g]`` holds member tuple ids for 0-based group index g;
    ``representatives[g]`` is the member centroid over ``attrs``.
    """

    attrs: tuple[str, ...]
    tau: int
    omega: float
    gid: np.ndarray
    groups: tuple[np.ndarray, ...]
    sizes: np.ndarray
    radii: np.ndarray
    representatives: np.ndarray  # m x k
    degenerate: frozenset[int]   # 0-based group indices violating conditions
    points: np.ndarray = field(repr=False)  # n x k source matrix over attrs
    origin_ids: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def m(self) -> int:
        return len(self.groups)


def _attr_matrix(rel: Relation, attrs: Sequence[str]) -> np.ndarray:
    for attr in attrs:
        if rel.schema.kind_of(attr) != NUMERIC:
            raise PartitionError(
                f"partitioning attribute {attr!r} is not numeric")
    if rel.n == 0:
        return np.zeros((0, len(attrs)))
    return np.column_stack([rel.column(a) for a in attrs])


def _group_stats(points: np.ndarray, ids: np.ndarray):
    sub = points[ids]
    centroid = sub.mean(axis=0)
    radius = float(np.abs(sub - centroid).max()) if len(ids) else 0.0
    return centroid, radius


def partition(rel: Relation, params: PartitionParams,
              ids: Optional[Sequence[int]] = None) -> Partitioning:
    """Recursively split the relation (or a tuple subset) into groups
    meeting the size and radius conditions."""
    if params.tau > max(rel.n, 1):
        raise PartitionError(
            f"size threshold {params.tau} exceeds relation size {rel.n}")
    points = _attr_matrix(rel, params.attrs)
    if ids is None:
        start = np.arange(rel.n, dtype=np.int64)
    else:
        start = np.asarray(sorted(int(i) for i in ids), dtype=np.int64)

    k = len(params.attrs)
    weights = 1 << np.arange(k)
    queue = deque()
    if len(start):
        queue.append(start)
    final: list[tuple[np.ndarray, np.ndarray, float, bool]] = []
    while queue:
        members = queue.popleft()
        centroid, radius = _group_stats(points, members)
        if len(members) <= params.tau and radius <= params.omega:
            final.append((members, centroid, radius, False))
            continue
        codes = (points[members] >= centroid) @ weights
        order = np.argsort(codes, kind="stable")
        codes_sorted = codes[order]
        cuts = np.nonzero(np.diff(codes_sorted))[0] + 1
        if len(cuts) == 0:
            # all members share a quadrant: identical points, cannot split
            final.append((members, centroid, radius, True))
            continue
        for part in np.split(members[order], cuts):
            queue.append(part)

    gid = np.zeros(rel.n, dtype=np.int64)
    groups, sizes, radii, reps, degenerate = [], [], [], [], set()
    for g, (members, centroid, radius, degen) in enumerate(final):
        members = np.sort(members)
        gid[members] = g + 1
        groups.append(members)
        sizes.append(len(members))
        radii.append(radius)
        reps.append(centroid)
        if degen:
            degenerate.add(g)
    return Partitioning(
        attrs=params.attrs, tau=params.tau, omega=params.omega, gid=gid,
        groups=tuple(groups), sizes=np.asarray(sizes, dtype=np.int64),
        radii=np.asarray(radii), degenerate=frozenset(degenerate),
        representatives=np.asarray(reps).reshape(len(final), k),
        points=points)


def radius_limit_from_epsilon(representatives: np.ndarray, epsilon: float,
                              direction: str) -> float:
    """Radius limit yielding the target approximation factor.

    gamma = epsilon for maximization (0 <= epsilon < 1) and
    epsilon / (1 + epsilon) for minimization (epsilon >= 0); the limit is
    the minimum of gamma * |representative value| over groups and attrs.
    """
    reps = np.asarray(representatives, dtype=np.float64)
    if reps.size == 0:
        raise PartitionError("no representatives to derive a radius limit from")
    if direction == MAXIMIZE_DIRECTION:
        if not 0 <= epsilon < 1:
            raise PartitionError(
                f"maximization needs 0 <= epsilon < 1, got {epsilon}")
        gamma = epsilon
    elif direction == MINIMIZE_DIRECTION:
        if epsilon < 0:
            raise PartitionError(f"minimization needs epsilon >= 0, got {epsilon}")
        gamma = epsilon / (1.0 + epsilon)
    else:
        raise PartitionError(f"direction must be 'max' or 'min', got {direction!r}")
    return float(gamma * np.abs(reps).min())


def partition_with_epsilon(rel: Relation, attrs: Sequence[str], tau: int,
                           epsilon: float, direction: str,
                           max_rounds: int = 3) -> Partitioning:
    """Partition with a radius limit derived from the target epsilon.

    The limit depends on the representatives, which depend on the
    partitioning; iterate: partition, recompute the implied limit from the
    new representatives, and re-partition while the enforced limit exceeds
    the implied one (at most ``max_rounds`` re-partitions). If the fixed
    point is not reached and all attribute values are positive, fall back
    to the limit implied by the raw values, which every subsequent
    representative is guaranteed to satisfy.
    """
    attrs = tuple(attrs)
    p = partition(rel, PartitionParams(attrs, tau, math.inf))
    if epsilon == 0:
        return partition(rel, PartitionParams(attrs, tau, 0.0))
    omega = radius_limit_from_epsilon(p.representatives, epsilon, direction)
    for _ in range(max_rounds):
        p = partition(rel, PartitionParams(attrs, tau, omega))
        required = radius_limit_from_epsilon(p.representatives, epsilon, direction)
        if omega <= required * (1 + 1e-12) + 1e-300:
            return p
        omega = required
    data_min = float(p.points.min()) if p.points.size else 0.0
    if data_min > 0:
        gamma = epsilon if direction == MAXIMIZE_DIRECTION else epsilon / (1 + epsilon)
        omega = gamma * float(np.abs(p.points).min())
        return partition(rel, PartitionParams(attrs, tau, omega))
    return p


def _rebuild(p: Partitioning, member_lists: list[np.ndarray],
             points: np.ndarray, n: int,
             origin_ids: Optional[np.ndarray]) -> Partitioning:
    """Recompute stats for new member lists; drop empty groups, renumber."""
    gid = np.zeros(n, dtype=np.int64)
    groups, sizes, radii, reps, degenerate = [], [], [], [], set()
    for members in member_lists:
        if len(members) == 0:
            continue
        g = len(groups)
        centroid, radius = _group_stats(points, members)
        gid[members] = g + 1
        groups.append(members)
        sizes.append(len(members))
        radii.append(radius)
        reps.append(centroid)
        if len(members) > p.tau or radius > p.omega * (1 + 1e-12):
            degenerate.add(g)
    k = len(p.attrs)
    return Partitioning(
        attrs=p.attrs, tau=p.tau, omega=p.omega, gid=gid,
        groups=tuple(groups), sizes=np.asarray(sizes, dtype=np.int64),
        radii=np.asarray(radii), degenerate=frozenset(degenerate),
        representatives=np.asarray(reps).reshape(len(groups), k),
        points=points, origin_ids=origin_ids)


def restrict_to_ids(p: Partitioning, keep_ids: Sequence[int]) -> Partitioning:
    """Partitioning over a tuple subset, keeping the original id space.

    Group memberships are preserved for survivors; centroids, radii, and
    sizes are recomputed; empty groups are dropped. A surviving group whose
    recomputed radius exceeds the stored limit is flagged degenerate (the
    centroid may move when members are removed)."""
    keep = np.zeros(len(p.gid), dtype=bool)
    keep[np.asarray(list(keep_ids), dtype=np.int64)] = True
    member_lists = [members[keep[members]] for members in p.groups]
    return _rebuild(p, member_lists, p.points, len(p.gid), p.origin_ids)


def shrink_for_scaling(p: Partitioning, keep_fraction: float,
                       seed: int) -> Partitioning:
    """Uniformly drop tuples, re-indexing survivors to a compact id space.

    Survivor selection is deterministic for a fixed seed. ``origin_ids``
    maps new ids back to the source relation, ascending; group memberships
    are preserved for survivors, so group sizes can only shrink."""
    if not 0 < keep_fraction <= 1:
        raise PartitionError(
            f"keep_fraction must be in (0, 1], got {keep_fraction}")
    n = len(p.gid)
    rng = np.random.default_rng(seed)
    survive = rng.random(n) < keep_fraction if keep_fraction < 1 else np.ones(n, bool)
    origin = np.nonzero(survive)[0].astype(np.int64)
    new_id = np.full(n, -1, dtype=np.int64)
    new_id[origin] = np.arange(len(origin))
    member_lists = []
    for members in p.groups:
        kept = members[survive[members]]
        member_lists.append(new_id[kept])
    return _rebuild(p, member_lists, p.points[origin], len(origin), origin)


def group_means(p: Partitioning, rel: Relation,
                attrs: Sequence[str]) -> np.ndarray:
    """Per-group means over arbitrary numeric attributes (m x len(attrs)).

    For attributes in ``p.attrs`` this reuses the stored representatives;
    other attributes are averaged on the fly."""
    cols = []
    for attr in attrs:
        if attr in p.attrs:
            cols.append(p.representatives[:, p.attrs.index(attr)])
        else:
            data = rel.column(attr)
            cols.append(np.asarray([data[g].mean() for g in p.groups]))
    return np.column_stack(cols) if cols else np.zeros((p.m, 0))


def save_partitioning(p: Partitioning, path) -> None:
    payload = {
        "attrs": list(p.attrs),
        "tau": int(p.tau),
        "omega": "inf" if math.isinf(p.omega) else float(p.omega),
        "gids": p.gid.tolist(),
        "representatives": p.representatives.tolist(),
        "radii": p.radii.tolist(),
        "sizes": p.sizes.tolist(),
        "degenerate": sorted(g + 1 for g in p.degenerate),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_partitioning(path, rel: Relation) -> Partitioning:
    """Re-attach a saved partitioning to its relation."""
    with open(path, "r", encoding="utf-8") as fh:
        d = json.load(fh)
    attrs = tuple(d["attrs"])
    gid = np.asarray(d["gids"], dtype=np.int64)
    if len(gid) != rel.n:
        raise PartitionError(
            f"{path}: gid column covers {len(gid)} tuples, relation has {rel.n}")
    points = _attr_matrix(rel, attrs)
    m = len(d["sizes"])
    groups = tuple(np.nonzero(gid == g + 1)[0].astype(np.int64) for g in range(m))
    sizes = np.asarray(d["sizes"], dtype=np.int64)
    if not np.array_equal(sizes, np.asarray([len(g) for g in groups])):
        raise PartitionError(f"{path}: stored sizes disagree with gid column")
    omega = math.inf if d["omega"] == "inf" else float(d["omega"])
    return Partitioning(
        attrs=attrs, tau=int(d["tau"]), omega=omega, gid=gid, groups=groups,
        sizes=sizes, radii=np.asarray(d["radii"], dtype=np.float64),
        representatives=np.asarray(d["representatives"], dtype=np.float64
                                   ).reshape(m, len(attrs)),
        degenerate=frozenset(int(g) - 1 for g in d["degenerate"]),
        points=points)
