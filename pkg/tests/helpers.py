"""Independent oracles for the test suite.

Everything here evaluates queries by direct aggregation with exact
rational arithmetic, deliberately bypassing the translation and solver
machinery it is used to check.
"""

from fractions import Fraction
from itertools import product

import numpy as np

from pkgquery import paql
from pkgquery.relation import NUMERIC, Relation


def tuple_passes(rel: Relation, pred: paql.BasePredicate, tid: int) -> bool:
    """Re-evaluate a conjunctive predicate on one tuple, scalar-by-scalar."""
    for c in pred.conjuncts:
        kind = rel.schema.kind_of(c.attr)
        if kind == NUMERIC:
            v = float(rel.column(c.attr)[tid])
            ok = {
                "=": v == c.value, "!=": v != c.value,
                "<": v < c.value, "<=": v <= c.value,
                ">": v > c.value, ">=": v >= c.value,
            }[c.op]
        else:
            v = rel.categorical(c.attr)[tid]
            ok = (v == c.value) if c.op == "=" else (v != c.value)
        if not ok:
            return False
    return True


def _agg_exact(expr: paql.AggregateExpr, rel: Relation, package) -> Fraction:
    """Exact COUNT/SUM/FILTERED_COUNT of a package (AVG handled by caller)."""
    total = Fraction(0)
    for tid, mult in package.items():
        if expr.kind == paql.COUNT:
            total += mult
        elif expr.kind == paql.SUM:
            total += Fraction(float(rel.column(expr.attr)[tid])) * mult
        elif expr.kind == paql.FILTERED_COUNT:
            if tuple_passes(rel, expr.filter, tid):
                total += mult
        else:
            raise AssertionError(f"unexpected aggregate {expr.kind}")
    return total


def predicate_holds(g: paql.GlobalPredicate, rel: Relation, package) -> bool:
    """Direct-aggregation truth of one validated global predicate.

    AVG over the empty package follows the linearized convention (the
    zero form satisfies <=, >=, and =). ``linear_shift`` contributes to
    the linearized left side exactly as in translation.
    """
    shift = Fraction(g.linear_shift)
    if isinstance(g.rhs, paql.AggregateExpr):
        lhs = _agg_exact(g.lhs, rel, package) - _agg_exact(g.rhs, rel, package)
        rhs = Fraction(0)
    elif g.lhs.kind == paql.AVG:
        v = Fraction(float(g.rhs))
        lhs = sum(
            ((Fraction(float(rel.column(g.lhs.attr)[tid])) - v) * mult
             for tid, mult in package.items()),
            Fraction(0))
        rhs = Fraction(0)
    else:
        lhs = _agg_exact(g.lhs, rel, package)
        rhs = Fraction(float(g.rhs))
    lhs += shift
    if g.op == "<=":
        return lhs <= rhs
    if g.op == ">=":
        return lhs >= rhs
    return lhs == rhs


def package_satisfies(q: paql.PackageQuery, rel: Relation, package) -> bool:
    """Whole-query check: base predicate per tuple, repetition bound,
    every global predicate by direct aggregation."""
    for tid, mult in package.items():
        if mult < 0:
            return False
        if q.repeat is not None and mult > q.repeat + 1:
            return False
        if q.base_predicate is not None and not tuple_passes(
                rel, q.base_predicate, tid):
            return False
    return all(predicate_holds(g, rel, package) for g in q.global_predicates)


def objective_exact(q: paql.PackageQuery, rel: Relation, package) -> Fraction:
    if q.objective is None:
        return Fraction(0)
    return _agg_exact(q.objective.expr, rel, package)


def enumerate_vectors(uppers):
    """All multiplicity vectors with 0 <= x_i <= uppers[i]."""
    return product(*(range(int(u) + 1) for u in uppers))


def best_package_by_enumeration(q: paql.PackageQuery, rel: Relation,
                                uppers) -> tuple:
    """(status, best objective, best package) by exhaustive enumeration."""
    best = None
    feasible_seen = False
    for vec in enumerate_vectors(uppers):
        package = {i: m for i, m in enumerate(vec) if m > 0}
        if not package_satisfies(q, rel, package):
            continue
        feasible_seen = True
        val = objective_exact(q, rel, package)
        if best is None:
            best = (val, package)
        elif q.objective is not None:
            if q.objective.direction == paql.MAXIMIZE and val > best[0]:
                best = (val, package)
            elif q.objective.direction == paql.MINIMIZE and val < best[0]:
                best = (val, package)
    if not feasible_seen:
        return "infeasible", None, None
    return "feasible", best[0], best[1]


def dyadic(rng: np.random.Generator, lo: float, hi: float, size=None,
           denom: int = 64) -> np.ndarray:
    """Uniform values snapped to the 1/denom grid: exact in float64."""
    raw = rng.uniform(lo, hi, size=size)
    return np.round(raw * denom) / denom
