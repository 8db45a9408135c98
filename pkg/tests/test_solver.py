from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import dyadic
from pkgquery import paql
from pkgquery.ilp import derive_bounds, package_from_solution, translate
from pkgquery.relation import from_columns
from pkgquery.solver import (
    SolverConfig,
    SolverError,
    brute_force,
    lp_relax,
    solve,
    verify_result,
)


def q_of(text, rel):
    return paql.validate(paql.parse(text), rel.schema)


class TestSolveExamples:
    def test_meal_planner_matches_hand_enumeration(self, recipes, meal_query):
        kcal = recipes.column("kcal")
        fat = recipes.column("saturated_fat")
        best = min(
            (subset for subset in combinations(range(5), 3)
             if 2.0 <= kcal[list(subset)].sum() <= 2.5),
            key=lambda subset: fat[list(subset)].sum())
        m = derive_bounds(translate(meal_query, recipes))
        res = solve(m)
        assert res.status == "optimal"
        assert res.objective == pytest.approx(fat[list(best)].sum())
        assert package_from_solution(m, res.x) == {i: 1 for i in best}

    def test_infeasible_count(self):
        rel = from_columns("T", {"x": [1.0, 2.0]})
        m = derive_bounds(translate(q_of(
            "SELECT PACKAGE(R) AS P FROM T R REPEAT 0 SUCH THAT COUNT(P.*) = 3", rel), rel))
        assert solve(m).status == "infeasible"

    def test_vacuous_objective_returns_all_zero(self):
        rel = from_columns("T", {"x": [1.0, 2.0, 3.0, 4.0]})
        m = derive_bounds(translate(q_of(
            "SELECT PACKAGE(R) AS P FROM T R REPEAT 0", rel), rel))
        res = solve(m)
        assert res.status == "optimal"
        assert res.objective == 0.0
        assert res.x.tolist() == [0.0] * 4

    def test_zero_variable_model(self):
        rel = from_columns("T", {"x": [1.0]})
        q = q_of("SELECT PACKAGE(R) AS P FROM T R REPEAT 0 SUCH THAT COUNT(P.*) >= 1", rel)
        m = derive_bounds(translate(q, rel, ids=[]))
        assert solve(m).status == "infeasible"
        q2 = q_of("SELECT PACKAGE(R) AS P FROM T R REPEAT 0 SUCH THAT COUNT(P.*) <= 2", rel)
        res = solve(derive_bounds(translate(q2, rel, ids=[])))
        assert res.status == "optimal" and res.objective == 0.0

    def test_requires_finite_bounds(self):
        rel = from_columns("T", {"x": [1.0]})
        m = translate(q_of("SELECT PACKAGE(R) AS P FROM T R MAXIMIZE SUM(P.x)", rel), rel)
        with pytest.raises(SolverError, match="finite"):
            solve(m)

    def test_time_limit_zero(self, recipes, meal_query):
        m = derive_bounds(translate(meal_query, recipes))
        res = solve(m, SolverConfig(time_limit=0.0))
        assert res.status == "time_limit"

    def test_bad_tolerances_rejected(self):
        with pytest.raises(SolverError, match="positive"):
            SolverConfig(integrality_tol=0.0)


class TestBruteForce:
    def test_knapsack_example(self):
        rel = from_columns("T", {"w": [1.0, 2.0, 3.0]})
        m = derive_bounds(translate(q_of(
            "SELECT PACKAGE(R) AS P FROM T R REPEAT 0 "
            "SUCH THAT COUNT(P.*) <= 2 MAXIMIZE SUM(P.w)", rel), rel))
        res = brute_force(m)
        assert res.status == "optimal"
        assert res.objective == 5.0
        assert res.x.tolist() == [0.0, 1.0, 1.0]

    def test_infeasible(self):
        rel = from_columns("T", {"x": [1.0, 2.0]})
        m = derive_bounds(translate(q_of(
            "SELECT PACKAGE(R) AS P FROM T R REPEAT 0 SUCH THAT COUNT(P.*) = 5", rel), rel))
        assert brute_force(m).status == "infeasible"

    def test_minimize_positive_prefers_empty(self):
        rel = from_columns("T", {"x": [1.0, 2.0]})
        m = derive_bounds(translate(q_of(
            "SELECT PACKAGE(R) AS P FROM T R REPEAT 0 "
            "SUCH THAT COUNT(P.*) <= 2 MINIMIZE SUM(P.x)", rel), rel))
        res = brute_force(m)
        assert res.objective == 0.0
        assert res.x.tolist() == [0.0, 0.0]

    def test_space_guard(self):
        rel = from_columns("T", {"x": np.ones(30)})
        m = derive_bounds(translate(q_of(
            "SELECT PACKAGE(R) AS P FROM T R REPEAT 3 "
            "SUCH THAT COUNT(P.*) <= 90 MAXIMIZE SUM(P.x)", rel), rel))
        with pytest.raises(SolverError, match="too large"):
            brute_force(m)


class TestLpRelax:
    def test_simple_bound(self):
        from pkgquery.ilp import IlpModel, LinearConstraint

        m = IlpModel(
            var_ids=np.array([0]), lower=np.zeros(1), upper=np.array([10.0]),
            constraints=(LinearConstraint(np.array([1.0]), "<=", 2.5),),
            objective=np.array([1.0]), maximize=True)
        res = lp_relax(m)
        assert res.objective == pytest.approx(2.5)
        assert res.x[0] == pytest.approx(2.5)

    def test_integral_relaxation_equals_ilp(self):
        rel = from_columns("T", {"x": [1.0, 1.0]})
        m = derive_bounds(translate(q_of(
            "SELECT PACKAGE(R) AS P FROM T R REPEAT 0 "
            "SUCH THAT COUNT(P.*) <= 2 MAXIMIZE COUNT(P.*)", rel), rel))
        assert lp_relax(m).objective == pytest.approx(2.0)
        assert solve(m).objective == pytest.approx(2.0)


def random_model(seed):
    """Small random model with bounded box for oracle comparisons."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 7))
    rel = from_columns("T", {
        "x": dyadic(rng, -2, 2, n),
        "y": dyadic(rng, 0.25, 2, n),
    })
    repeat = int(rng.integers(0, 3))
    parts = [f"COUNT(P.*) <= {int(rng.integers(1, 5))}"]
    if rng.integers(0, 2):
        parts.append(f"SUM(P.y) {'<=' if rng.integers(0, 2) else '>='} "
                     f"{rng.integers(0, 17) / 4.0}")
    if rng.integers(0, 2):
        parts.append(f"AVG(P.x) {'<=' if rng.integers(0, 2) else '>='} "
                     f"{rng.integers(-4, 5) / 4.0}")
    direction = "MAXIMIZE" if rng.integers(0, 2) else "MINIMIZE"
    attr = "x" if rng.integers(0, 2) else "y"
    text = (f"SELECT PACKAGE(R) AS P FROM T R REPEAT {repeat} SUCH THAT "
            f"{' AND '.join(parts)} {direction} SUM(P.{attr})")
    return derive_bounds(translate(q_of(text, rel), rel))


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**6))
def test_oracle_equivalence(seed):
    m = random_model(seed)
    exact = solve(m)
    oracle = brute_force(m)
    assert exact.status == oracle.status
    if exact.status == "optimal":
        assert exact.objective == pytest.approx(oracle.objective, abs=1e-6)
        assert verify_result(m, exact)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_lp_bound_dominates_ilp(seed):
    m = random_model(seed)
    oracle = brute_force(m)
    lp = lp_relax(m)
    if oracle.status != "optimal":
        return
    assert lp.status == "optimal"
    if m.maximize:
        assert lp.objective >= oracle.objective - 1e-7
    else:
        assert lp.objective <= oracle.objective + 1e-7


def test_determinism(recipes, meal_query):
    m = derive_bounds(translate(meal_query, recipes))
    runs = [solve(m, SolverConfig(seed=7)) for _ in range(3)]
    assert len({r.status for r in runs}) == 1
    assert len({r.objective for r in runs}) == 1
    assert all(np.array_equal(runs[0].x, r.x) for r in runs)
