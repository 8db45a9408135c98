"""Exact ILP solving: branch-and-bound, brute-force oracle, LP relaxation.

``solve`` is the default black-box solver behind both evaluation methods;
anything with the same (IlpModel, SolverConfig) -> SolveResult signature
can stand in for it. ``brute_force`` enumerates the whole multiplicity box
and is the independent oracle used throughout the test suite.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .ilp import IlpModel, feasible
from .simplex import INFEASIBLE, OPTIMAL, UNBOUNDED, LpResult, lp_solve

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_UNBOUNDED = "unbounded"
STATUS_TIME_LIMIT = "time_limit"

_BOUND_TOL = 1e-9


class SolverError(Exception):
    pass


@dataclass(frozen=True)
class SolverConfig:
    time_limit: float = 3600.0
    integrality_tol: float = 1e-6
    feasibility_tol: float = 1e-9
    node_limit: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.integrality_tol <= 0 or self.feasibility_tol <= 0:
            raise SolverError("tolerances must be positive")


@dataclass
class SolveStats:
    nodes: int = 0
    lp_iterations: int = 0
    wall_time_s: float = 0.0


@dataclass
class SolveResult:
    status: str
    x: Optional[np.ndarray]
    objective: Optional[float]
    stats: SolveStats = field(default_factory=SolveStats)


def _round_candidates(x: np.ndarray, frac_idx: np.ndarray, lo: np.ndarray,
                      hi: np.ndarray, A: np.ndarray, ops, b: np.ndarray,
                      c: np.ndarray, tol: float):
    """Best feasible floor/ceil rounding of an LP point's fractional support.

    A basic LP solution has at most one fractional variable per constraint
    row, so the 2^f combinations stay tiny; deltas are evaluated against
    the all-floor base instead of re-scoring full vectors. Returns
    (value, vector) in the caller's objective sense or None.
    """
    f = len(frac_idx)
    if f > 12:
        return None
    base = np.round(x)  # near-integral entries become exactly integral
    base[frac_idx] = np.floor(x[frac_idx])
    lhs_base = A @ base if len(ops) else np.zeros(0)
    val_base = float(c @ base)
    cols = A[:, frac_idx] if len(ops) else np.zeros((0, f))
    best = None
    for mask in range(1 << f):
        bits = np.array([(mask >> j) & 1 for j in range(f)], dtype=np.float64)
        cand_vals = np.floor(x[frac_idx]) + bits
        if np.any(cand_vals < lo[frac_idx]) or np.any(cand_vals > hi[frac_idx]):
            continue
        lhs = lhs_base + cols @ bits
        ok = True
        for i, op in enumerate(ops):
            if op == "<=" and lhs[i] > b[i] + tol:
                ok = False
            elif op == ">=" and lhs[i] < b[i] - tol:
                ok = False
            elif op == "=" and abs(lhs[i] - b[i]) > tol:
                ok = False
            if not ok:
                break
        if not ok:
            continue
        val = val_base + float(c[frac_idx] @ bits)
        if best is None or val > best[0]:
            vec = base.copy()
            vec[frac_idx] = cand_vals
            best = (val, vec)
    return best


def _row_violation(lhs: np.ndarray, ops, b: np.ndarray) -> np.ndarray:
    """Per-row constraint violation of stacked left-hand sides (rows x ...)."""
    out = np.zeros_like(lhs)
    for i, op in enumerate(ops):
        if op == "<=":
            out[i] = np.maximum(0.0, lhs[i] - b[i])
        elif op == ">=":
            out[i] = np.maximum(0.0, b[i] - lhs[i])
        else:
            out[i] = np.abs(lhs[i] - b[i])
    return out


def _greedy_repair(x0: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                   A: np.ndarray, ops, b: np.ndarray, tol: float,
                   max_steps: int = 80) -> Optional[np.ndarray]:
    """Walk an integral point toward feasibility one unit move at a time.

    Each step applies the +-1 change that shrinks the total violation the
    most (ties to the lowest variable index). Returns a feasible vector or
    None if no move improves."""
    if len(ops) == 0:
        return np.clip(x0, lo, hi)
    x = np.clip(x0, lo, hi)
    lhs = A @ x
    for _ in range(max_steps):
        total = float(_row_violation(lhs[:, None], ops, b).sum())
        if total <= tol * (len(ops) + 1):
            return x
        v_plus = _row_violation(lhs[:, None] + A, ops, b).sum(axis=0)
        v_minus = _row_violation(lhs[:, None] - A, ops, b).sum(axis=0)
        v_plus[x >= hi] = np.inf
        v_minus[x <= lo] = np.inf
        j_plus = int(np.argmin(v_plus))
        j_minus = int(np.argmin(v_minus))
        if v_plus[j_plus] <= v_minus[j_minus]:
            best, j, step = v_plus[j_plus], j_plus, 1.0
        else:
            best, j, step = v_minus[j_minus], j_minus, -1.0
        if not best < total - 1e-12:
            return None
        x[j] += step
        lhs += step * A[:, j]
    return None


def _feasible_after(lhs: np.ndarray, cols: np.ndarray, ops, b: np.ndarray,
                    tol: float) -> np.ndarray:
    """Mask of unit moves (lhs + cols[:, j]) that keep every row feasible."""
    ok = np.ones(cols.shape[1], dtype=bool)
    for i, op in enumerate(ops):
        new = lhs[i] + cols[i]
        if op == "<=":
            ok &= new <= b[i] + tol
        elif op == ">=":
            ok &= new >= b[i] - tol
        else:
            ok &= np.abs(new - b[i]) <= tol
    return ok


def _greedy_improve(x: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                    A: np.ndarray, ops, b: np.ndarray, c: np.ndarray,
                    tol: float, max_steps: int = 400) -> np.ndarray:
    """Climb from a feasible integral point with unit add/drop moves.

    Each step applies the single feasibility-preserving +-1 move with the
    best objective gain (maximize sense, ties to the lowest index). Keeps
    the point feasible throughout, so the result can always be offered."""
    if len(ops) == 0:
        out = x.copy()
        out[c > 0] = hi[c > 0]
        out[c < 0] = lo[c < 0]
        return out
    x = x.copy()
    lhs = A @ x
    for _ in range(max_steps):
        add_ok = (x < hi - 0.5) & (c > 1e-12) & _feasible_after(lhs, A, ops, b, tol)
        drop_ok = (x > lo + 0.5) & (c < -1e-12) & _feasible_after(lhs, -A, ops, b, tol)
        best_gain = 0.0
        move = None
        if add_ok.any():
            j = int(np.argmax(np.where(add_ok, c, -np.inf)))
            best_gain, move = c[j], (j, 1.0)
        if drop_ok.any():
            j = int(np.argmax(np.where(drop_ok, -c, -np.inf)))
            if -c[j] > best_gain:
                best_gain, move = -c[j], (j, -1.0)
        if move is None or best_gain <= 1e-12:
            return x
        j, step = move
        x[j] += step
        lhs += step * A[:, j]
    return x


def _objective_grid(c: np.ndarray) -> Optional[float]:
    """Largest power-of-two grid (down to 2^-24) that every objective
    coefficient lies on exactly, or None. Integer coefficients yield 1.0."""
    nz = c[c != 0]
    if nz.size == 0:
        return 1.0
    if np.abs(nz).max() > 1e12:
        return None
    for k in range(0, 25):
        g = 2.0 ** -k
        scaled = nz / g
        if np.all(scaled == np.round(scaled)):
            return g
    return None


def _constraint_arrays(m: IlpModel):
    if not m.constraints:
        return np.zeros((0, m.n_vars)), [], np.zeros(0)
    A = np.vstack([c.coeffs for c in m.constraints])
    ops = [c.op for c in m.constraints]
    b = np.asarray([c.rhs for c in m.constraints])
    return A, ops, b


def _empty_model_result(m: IlpModel) -> SolveResult:
    ok = all(c.satisfied_by(np.zeros(0)) for c in m.constraints)
    if not ok:
        return SolveResult(STATUS_INFEASIBLE, None, None)
    return SolveResult(STATUS_OPTIMAL, np.zeros(0), 0.0)


def lp_relax(m: IlpModel) -> LpResult:
    """Continuous relaxation; its objective bounds the integer optimum."""
    if m.n_vars == 0:
        r = _empty_model_result(m)
        return LpResult(OPTIMAL if r.status == STATUS_OPTIMAL else INFEASIBLE,
                        r.x, r.objective, 0)
    if not np.all(np.isfinite(m.upper)):
        raise SolverError("lp_relax requires finite variable bounds")
    A, ops, b = _constraint_arrays(m)
    return lp_solve(m.objective, A, ops, b, m.lower, m.upper, maximize=m.maximize)


class _Search:
    """Shared branch-and-bound state in maximize space."""

    def __init__(self, m: IlpModel, cfg: SolverConfig):
        self.cfg = cfg
        self.t0 = time.perf_counter()
        self.A, self.ops, self.b = _constraint_arrays(m)
        self.sign = 1.0 if m.maximize else -1.0
        self.c = self.sign * m.objective
        self.lo0 = m.lower.copy()
        self.hi0 = m.upper.copy()
        self.grid = _objective_grid(self.c)
        self.stats = SolveStats()
        self.best_val = -math.inf
        self.best_x: Optional[np.ndarray] = None
        self.hit_limit = False

    def snap(self, v: float) -> float:
        # integral solutions live on the objective-coefficient grid, so a
        # dual bound rounds down to it without losing any solution
        if self.grid is None:
            return v
        return math.floor(v / self.grid + 1e-6) * self.grid

    def out_of_budget(self) -> bool:
        if time.perf_counter() - self.t0 > self.cfg.time_limit:
            self.hit_limit = True
        elif (self.cfg.node_limit is not None
              and self.stats.nodes >= self.cfg.node_limit):
            self.hit_limit = True
        return self.hit_limit

    def offer(self, vec: np.ndarray) -> None:
        """Record a feasible integral candidate (root-box coordinates)."""
        val = float(self.c @ vec)
        if val > self.best_val:
            self.best_val = val
            self.best_x = vec.copy()

    def node_heuristics(self, x: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                        try_repair: bool) -> bool:
        """Harvest incumbents from an LP point; True if it was integral."""
        ftol = self.cfg.feasibility_tol

        def polish(vec):
            self.offer(_greedy_improve(vec, self.lo0, self.hi0, self.A,
                                       self.ops, self.b, self.c, ftol))

        frac = np.abs(x - np.round(x))
        frac_idx = np.nonzero(frac > self.cfg.integrality_tol)[0]
        if len(frac_idx) == 0:
            self.offer(np.round(x))
            return True
        rounded = _round_candidates(x, frac_idx, lo, hi, self.A, self.ops,
                                    self.b, self.c, ftol)
        if rounded is not None:
            polish(rounded[1])
        if try_repair and self.best_x is None:
            repaired = _greedy_repair(np.round(x), self.lo0, self.hi0, self.A,
                                      self.ops, self.b, ftol)
            if repaired is not None:
                polish(repaired)
        return False

    def fix_variables(self, res) -> tuple[np.ndarray, np.ndarray]:
        """Root reduced-cost fixing: variables whose move away from their
        bound provably cannot beat the incumbent get pinned there.

        Iterates because each re-solve tightens the bound. Only removes
        solutions no better than the incumbent, which stays recorded, so
        the final answer is unaffected."""
        lo, hi = self.lo0.copy(), self.hi0.copy()
        for _ in range(4):
            if self.best_x is None or res.reduced_costs is None:
                break
            bound = res.objective
            if self.snap(bound) <= self.best_val + _BOUND_TOL:
                break  # incumbent already optimal for this box
            d = res.reduced_costs
            at_ub = res.at_upper
            margin = 1e-9 * max(1.0, abs(self.best_val))
            open_ = hi > lo + 0.5
            worse = bound + np.where(at_ub, -d, d)
            if self.grid is not None:
                worse = np.floor(worse / self.grid + 1e-6) * self.grid
            fixable = open_ & (worse <= self.best_val + margin) & (np.abs(d) > 1e-12)
            if not fixable.any():
                break
            to_lb = fixable & ~at_ub
            to_ub = fixable & at_ub
            hi[to_lb] = lo[to_lb]
            lo[to_ub] = hi[to_ub]
            res = lp_solve(self.c, self.A, self.ops, self.b, lo, hi, maximize=True)
            self.stats.lp_iterations += res.iterations
            if res.status != OPTIMAL:
                # no solution better than the incumbent survives in the box
                hi[:] = lo
                break
            self.node_heuristics(res.x, lo, hi, try_repair=False)
        return lo, hi

    def _reduced(self, lo0: np.ndarray, hi0: np.ndarray):
        """Fold pinned variables into the right-hand sides, keeping the
        free core; returns (A, b, c, lo, hi, const, embed)."""
        free = hi0 > lo0 + 0.5
        if free.all():
            return self.A, self.b, self.c, lo0, hi0, 0.0, None
        fixed_x = lo0[~free]
        const = float(self.c[~free] @ fixed_x)
        A_r = self.A[:, free].copy() if len(self.ops) else self.A
        b_r = self.b - (self.A[:, ~free] @ fixed_x if len(self.ops) else 0.0)
        return (A_r, b_r, self.c[free], lo0[free], hi0[free], const,
                (lo0.copy(), free))

    def dive(self, lo0: np.ndarray, hi0: np.ndarray, max_rounds: int = 60) -> None:
        """LP fix-and-dive: pin near-integral variables at their rounded
        values, round the most fractional one, re-solve; an integral end
        point becomes an incumbent. Pure heuristic, never prunes."""
        A, b, c, core_lo, core_hi, _const, embed = self._reduced(lo0, hi0)
        if len(core_lo) == 0:
            return
        lo, hi = core_lo.copy(), core_hi.copy()
        itol = self.cfg.integrality_tol
        for _ in range(max_rounds):
            res = lp_solve(c, A, self.ops, b, lo, hi, maximize=True)
            self.stats.lp_iterations += res.iterations
            if res.status != OPTIMAL:
                return
            x = res.x
            frac = np.abs(x - np.round(x))
            near = frac <= itol
            if near.all():
                vec = _greedy_improve(np.round(x), core_lo, core_hi, A,
                                      self.ops, b, c, self.cfg.feasibility_tol)
                if embed is None:
                    self.offer(vec)
                else:
                    template, free = embed
                    full = template.copy()
                    full[free] = vec
                    self.offer(full)
                return
            pinned = np.round(x[near])
            lo[near] = pinned
            hi[near] = pinned
            j = int(np.argmax(np.where(near, -1.0, frac)))
            v = float(np.round(x[j]))
            lo[j] = hi[j] = min(max(v, lo[j]), hi[j])

    def dfs(self, lo0: np.ndarray, hi0: np.ndarray) -> None:
        """Depth-first search, round-down child first, most-fractional
        branching with lowest-index tie-break, incumbent pruning with a
        1e-9 bound tolerance."""
        A, b, c, lo, hi, const, embed = self._reduced(lo0, hi0)
        self._dfs_arrays(A, b, c, lo, hi, const, embed)

    def _dfs_arrays(self, A, b, c, lo0, hi0, const, embed) -> None:
        if len(lo0) == 0:
            return
        itol = self.cfg.integrality_tol
        ftol = self.cfg.feasibility_tol

        def offer_local(vec, polish=True):
            if polish:
                vec = _greedy_improve(vec, lo0, hi0, A, self.ops, b, c, ftol)
            if embed is None:
                self.offer(vec)
            else:
                template, free = embed
                full = template.copy()
                full[free] = vec
                self.offer(full)

        stack = [(lo0.copy(), hi0.copy())]
        while stack:
            if self.out_of_budget():
                return
            lo, hi = stack.pop()
            self.stats.nodes += 1
            if np.any(lo > hi):
                continue
            res = lp_solve(c, A, self.ops, b, lo, hi, maximize=True)
            self.stats.lp_iterations += res.iterations
            if res.status == INFEASIBLE:
                continue
            if res.status == UNBOUNDED:
                raise SolverError("unbounded relaxation under finite bounds")
            # const is a grid multiple, so snapping commutes with the shift
            node_bound = self.snap(res.objective + const) - const
            if node_bound + const <= self.best_val + _BOUND_TOL:
                continue
            x = res.x
            frac = np.abs(x - np.round(x))
            if np.all(frac <= itol):
                # integral solutions beneath a node never beat its bound
                assert float(c @ np.round(x)) <= node_bound + 1e-6
                offer_local(np.round(x))
                continue
            frac_idx = np.nonzero(frac > itol)[0]
            rounded = _round_candidates(x, frac_idx, lo, hi, A, self.ops, b,
                                        c, self.cfg.feasibility_tol)
            if rounded is not None:
                offer_local(rounded[1])
                if node_bound + const <= self.best_val + _BOUND_TOL:
                    continue
            if self.best_x is None and self.stats.nodes % 25 == 0:
                repaired = _greedy_repair(np.round(x), lo0, hi0, A, self.ops,
                                          b, self.cfg.feasibility_tol)
                if repaired is not None:
                    offer_local(repaired)
                    if node_bound + const <= self.best_val + _BOUND_TOL:
                        continue
            # branch on the variable closest to half-integrality
            dist = np.minimum(x - np.floor(x), np.ceil(x) - x)
            dist[frac <= itol] = -1.0
            j = int(np.argmax(dist))  # argmax keeps the lowest index on ties
            down_hi = hi.copy()
            down_hi[j] = math.floor(x[j])
            up_lo = lo.copy()
            up_lo[j] = math.ceil(x[j])
            stack.append((up_lo, hi))
            stack.append((lo, down_hi))  # LIFO: round-down child first


def solve(m: IlpModel, cfg: SolverConfig = SolverConfig()) -> SolveResult:
    """Exact branch-and-bound over the LP relaxation.

    Solves the root, harvests incumbents by rounding/repair, pins variables
    that reduced costs prove cannot move (shrinking the branching core),
    then runs depth-first search. Deterministic for a fixed config; the
    reported objective is exact to 1e-6 absolute / 1e-9 relative.
    """
    t0 = time.perf_counter()
    if m.n_vars == 0:
        res = _empty_model_result(m)
        res.stats.wall_time_s = time.perf_counter() - t0
        return res
    if not np.all(np.isfinite(m.upper)):
        raise SolverError("solve requires finite variable bounds; run derive_bounds")

    if time.perf_counter() - t0 > cfg.time_limit:
        return SolveResult(STATUS_TIME_LIMIT, None, None,
                           SolveStats(wall_time_s=time.perf_counter() - t0))

    s = _Search(m, cfg)
    root = lp_solve(s.c, s.A, s.ops, s.b, s.lo0, s.hi0, maximize=True)
    s.stats.nodes += 1
    s.stats.lp_iterations += root.iterations
    if root.status == INFEASIBLE:
        s.stats.wall_time_s = time.perf_counter() - t0
        return SolveResult(STATUS_INFEASIBLE, None, None, s.stats)
    if root.status == UNBOUNDED:
        s.stats.wall_time_s = time.perf_counter() - t0
        return SolveResult(STATUS_UNBOUNDED, None, None, s.stats)

    integral = s.node_heuristics(root.x, s.lo0, s.hi0, try_repair=True)
    root_bound = s.snap(root.objective)
    if integral or (s.best_x is not None and root_bound <= s.best_val + _BOUND_TOL):
        s.stats.wall_time_s = time.perf_counter() - t0
        return SolveResult(STATUS_OPTIMAL, s.best_x, s.sign * s.best_val, s.stats)

    lo, hi = s.fix_variables(root)
    before = s.best_val
    s.dive(lo, hi)
    if s.best_val > before:
        # a stronger incumbent pins more variables; re-fix from the root
        lo, hi = s.fix_variables(root)
    s.dfs(lo, hi)

    s.stats.wall_time_s = time.perf_counter() - t0
    if s.best_x is not None:
        status = STATUS_TIME_LIMIT if s.hit_limit else STATUS_OPTIMAL
        return SolveResult(status, s.best_x, s.sign * s.best_val, s.stats)
    if s.hit_limit:
        return SolveResult(STATUS_TIME_LIMIT, None, None, s.stats)
    return SolveResult(STATUS_INFEASIBLE, None, None, s.stats)


_BRUTE_SPACE_LIMIT = 10_000_000
_CHUNK = 1 << 18


def brute_force(m: IlpModel) -> SolveResult:
    """Exhaustive enumeration of every multiplicity vector in the bound box.

    Independent of the LP machinery; requires the search space to hold at
    most 10^7 vectors. Ties keep the enumeration-first vector (all-zeros
    first), matching the solver's vacuous-objective behavior.
    """
    t0 = time.perf_counter()
    if m.n_vars == 0:
        res = _empty_model_result(m)
        res.stats.wall_time_s = time.perf_counter() - t0
        return res
    if not np.all(np.isfinite(m.upper)):
        raise SolverError("brute_force requires finite variable bounds")
    lo = m.lower.astype(np.int64)
    hi = np.floor(m.upper + 1e-9).astype(np.int64)
    if np.any(lo > hi):
        return SolveResult(STATUS_INFEASIBLE, None, None,
                           SolveStats(wall_time_s=time.perf_counter() - t0))
    sizes = hi - lo + 1
    space = float(np.prod(sizes.astype(np.float64)))
    if space > _BRUTE_SPACE_LIMIT:
        raise SolverError(
            f"search space too large for brute force ({space:.3g} > "
            f"{_BRUTE_SPACE_LIMIT})")
    total = int(round(space))

    n = m.n_vars
    strides = np.ones(n, dtype=np.int64)
    for j in range(n - 2, -1, -1):
        strides[j] = strides[j + 1] * sizes[j + 1]
    A, ops, b = _constraint_arrays(m)
    sign = 1.0 if m.maximize else -1.0

    best_val = -math.inf
    best_x = None
    stats = SolveStats()
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        X = (idx[:, None] // strides[None, :]) % sizes[None, :] + lo[None, :]
        Xf = X.astype(np.float64)
        ok = np.ones(len(idx), dtype=bool)
        for i, op in enumerate(ops):
            lhs = Xf @ A[i]
            if op == "<=":
                ok &= lhs <= b[i] + 1e-9
            elif op == ">=":
                ok &= lhs >= b[i] - 1e-9
            else:
                ok &= np.abs(lhs - b[i]) <= 1e-9
        if not ok.any():
            continue
        vals = sign * (Xf[ok] @ m.objective)
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val = float(vals[k])
            best_x = Xf[ok][k]
    stats.nodes = total
    stats.wall_time_s = time.perf_counter() - t0
    if best_x is None:
        return SolveResult(STATUS_INFEASIBLE, None, None, stats)
    return SolveResult(STATUS_OPTIMAL, best_x, sign * best_val, stats)


def debug_dump(m: IlpModel) -> str:
    """Human-readable LP-style rendering of a model, for inspection."""
    def term(coef, i):
        return f"{coef:+g} x{int(m.var_ids[i])}"

    lines = []
    sense = "maximize" if m.maximize else "minimize"
    obj = " ".join(term(c, i) for i, c in enumerate(m.objective) if c != 0) or "0"
    lines.append(f"{sense} {obj}")
    lines.append("subject to")
    for k, c in enumerate(m.constraints):
        row = " ".join(term(v, i) for i, v in enumerate(c.coeffs) if v != 0) or "0"
        tag = f"  [{c.provenance}]" if c.provenance else ""
        lines.append(f"  c{k}: {row} {c.op} {c.rhs:g}{tag}")
    lines.append("bounds")
    for i in range(m.n_vars):
        hi = "inf" if not np.isfinite(m.upper[i]) else f"{m.upper[i]:g}"
        lines.append(f"  {m.lower[i]:g} <= x{int(m.var_ids[i])} <= {hi}")
    lines.append("integers: all")
    return "\n".join(lines)


def verify_result(m: IlpModel, res: SolveResult, tol: float = 1e-6) -> bool:
    """Sanity check: an optimal result's vector is integral and feasible."""
    if res.status != STATUS_OPTIMAL:
        return res.x is None
    x = res.x
    if np.any(np.abs(x - np.round(x)) > tol):
        return False
    return feasible(m, np.round(x), tol=tol)
