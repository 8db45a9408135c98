"""Dense bounded-variable primal simplex, two-phase.

Solves  max c.x  s.t.  A x (<=|>=|=) b,  l <= x <= u  with a full tableau.
Variable bounds are handled implicitly (nonbasic variables sit at either
bound), so branch-and-bound can tighten bounds without growing the tableau.
Dantzig pricing with a switch to Bland's rule after a degenerate stall.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

_LB, _UB, _BASIC = 0, 1, 2

_ENTER_TOL = 1e-9
_PIVOT_TOL = 1e-9
_STALL_LIMIT = 120


class SimplexError(Exception):
    """Numerical failure (singular pivot, cycling past the iteration cap)."""


@dataclass
class LpResult:
    status: str
    x: Optional[np.ndarray]  # structural variables only
    objective: Optional[float]
    iterations: int
    # optimal-basis sensitivity for the structural variables (maximize
    # sense): reduced cost per variable and whether it sits at its upper
    # bound; basic variables carry ~0 reduced cost
    reduced_costs: Optional[np.ndarray] = None
    at_upper: Optional[np.ndarray] = None


def _simplex_loop(T, xB, basis, stat, ub, c, allowed, max_iter):
    """Run pivots to optimality for max c.x; mutates all tableau state.

    ``allowed`` masks columns eligible to enter (artificials stay out).
    Returns ('optimal'|'unbounded', iterations).

    Reduced costs depend only on the basis, not on the basic values, so
    every bound flip under one pricing pass shares the same reduced-cost
    vector; flips are swept in bulk and the pass ends at the first pivot.
    """
    m, n_total = T.shape
    rounds = 0
    iters = 0
    bland = False
    stall = 0
    while True:
        rounds += 1
        if rounds > max_iter:
            raise SimplexError("simplex iteration cap exceeded (cycling?)")
        cB = c[basis] if m else np.zeros(0)
        d = c - cB @ T if m else c.copy()
        at_lb = (stat == _LB) & allowed & (d > _ENTER_TOL)
        at_ub = (stat == _UB) & allowed & (d < -_ENTER_TOL)
        eligible = at_lb | at_ub
        if not eligible.any():
            return OPTIMAL, max(iters, rounds)
        idx = np.nonzero(eligible)[0]
        if bland:
            order = idx
        else:
            order = idx[np.argsort(-np.abs(d[idx]), kind="stable")]

        progressed = False
        for e_ in order:
            e = int(e_)
            # a flip earlier in this sweep may have retired this candidate
            if stat[e] == _LB:
                if d[e] <= _ENTER_TOL:
                    continue
                delta = 1.0
            elif stat[e] == _UB:
                if d[e] >= -_ENTER_TOL:
                    continue
                delta = -1.0
            else:
                continue
            iters += 1
            dy = delta * T[:, e]

            # largest step before a basic variable hits one of its bounds
            lim = np.full(m, np.inf)
            ubB = ub[basis] if m else np.zeros(0)
            pos = dy > _PIVOT_TOL
            if pos.any():
                lim[pos] = np.maximum(xB[pos], 0.0) / dy[pos]
            neg = dy < -_PIVOT_TOL
            if neg.any():
                lim[neg] = np.maximum(ubB[neg] - xB[neg], 0.0) / (-dy[neg])

            t_row = lim.min() if m else np.inf
            t_flip = ub[e]  # internal lower bounds are all 0
            t = min(t_row, t_flip)
            if not np.isfinite(t):
                return UNBOUNDED, max(iters, rounds)

            if t_flip <= t_row:
                # bound flip: cross to the other bound, reduced costs intact
                xB -= t_flip * dy
                stat[e] = _UB if stat[e] == _LB else _LB
                progressed = True
                continue

            if t <= _PIVOT_TOL:
                stall += 1
                if stall > _STALL_LIMIT:
                    bland = True
            else:
                stall = 0

            # pivot: among limiting rows pick the smallest variable index
            cand = np.nonzero(lim <= t_row + _PIVOT_TOL)[0]
            r = int(cand[np.argmin(basis[cand])])
            leaving = basis[r]
            hit_upper = dy[r] < 0  # leaving variable rose to its upper bound

            xB -= t * dy
            entering_value = t if delta > 0 else ub[e] - t

            piv = T[r, e]
            if abs(piv) < _PIVOT_TOL:
                raise SimplexError("near-singular pivot element")
            T[r, :] /= piv
            col = T[:, e].copy()
            col[r] = 0.0
            T -= np.outer(col, T[r, :])
            T[:, e] = 0.0
            T[r, e] = 1.0

            stat[leaving] = _UB if hit_upper else _LB
            xB[r] = entering_value
            basis[r] = e
            stat[e] = _BASIC
            progressed = True
            break  # basis changed; reprice

        if not progressed:
            # every candidate was retired by flips in this sweep
            continue


def lp_solve(obj, rows, ops, rhs, lower, upper, maximize=True) -> LpResult:
    """Solve the bounded LP; returns structural solution and objective.

    rows: k x n coefficient matrix (k may be 0); ops: list of '<='/'>='/'=';
    lower/upper: per-variable bounds, upper may be +inf.
    """
    obj = np.asarray(obj, dtype=np.float64)
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    n = len(obj)
    A = np.asarray(rows, dtype=np.float64).reshape(len(ops), n) if len(ops) else \
        np.zeros((0, n))
    b = np.asarray(rhs, dtype=np.float64)

    if np.any(lower > upper + 1e-12):
        return LpResult(INFEASIBLE, None, None, 0)

    sign = 1.0 if maximize else -1.0
    c_struct = sign * obj

    # shift to zero lower bounds: y = x - l
    span = upper - lower
    b_shift = b - A @ lower if len(ops) else b
    const = float(c_struct @ lower)

    m = len(ops)
    flip = np.ones(m)
    ops2 = list(ops)
    for i in range(m):
        if b_shift[i] < 0:
            flip[i] = -1.0
            if ops2[i] == "<=":
                ops2[i] = ">="
            elif ops2[i] == ">=":
                ops2[i] = "<="
    A2 = A * flip[:, None]
    b2 = b_shift * flip

    n_slack = sum(1 for op in ops2 if op != "=")
    art_rows = [i for i, op in enumerate(ops2) if op != "<="]
    n_art = len(art_rows)
    n_total = n + n_slack + n_art

    T = np.zeros((m, n_total))
    T[:, :n] = A2
    ub_all = np.concatenate([span, np.full(n_slack + n_art, np.inf)])
    basis = np.empty(m, dtype=np.int64)
    stat = np.full(n_total, _LB, dtype=np.int8)
    xB = b2.copy()

    slack_at = n
    art_at = n + n_slack
    for i, op in enumerate(ops2):
        if op == "<=":
            T[i, slack_at] = 1.0
            basis[i] = slack_at
            slack_at += 1
        elif op == ">=":
            T[i, slack_at] = -1.0
            slack_at += 1
            T[i, art_at] = 1.0
            basis[i] = art_at
            art_at += 1
        else:
            T[i, art_at] = 1.0
            basis[i] = art_at
            art_at += 1
    stat[basis] = _BASIC

    max_iter = 20000 + 10 * (m + n_total)
    total_iters = 0

    if n_art:
        c1 = np.zeros(n_total)
        c1[n + n_slack:] = -1.0
        allowed = np.ones(n_total, dtype=bool)
        status, it = _simplex_loop(T, xB, basis, stat, ub_all, c1, allowed, max_iter)
        total_iters += it
        if status != OPTIMAL:
            raise SimplexError("phase 1 terminated abnormally")
        art_basic = basis >= n + n_slack
        residual = float(xB[art_basic].sum()) if art_basic.any() else 0.0
        also = stat[n + n_slack:] == _UB
        if residual > 1e-7 or also.any():
            return LpResult(INFEASIBLE, None, None, total_iters)
        xB[art_basic] = 0.0
        # freeze artificials at zero; they may linger in the basis at value 0
        ub_all[n + n_slack:] = 0.0

    c2 = np.zeros(n_total)
    c2[:n] = c_struct
    allowed = np.ones(n_total, dtype=bool)
    allowed[n + n_slack:] = False
    status, it = _simplex_loop(T, xB, basis, stat, ub_all, c2, allowed, max_iter)
    total_iters += it
    if status == UNBOUNDED:
        return LpResult(UNBOUNDED, None, None, total_iters)

    x_all = np.zeros(n_total)
    x_all[stat == _UB] = ub_all[stat == _UB]
    x_all[basis] = xB
    y = x_all[:n]
    x = np.clip(y, 0.0, span) + lower
    objective = sign * (float(c_struct @ y) + const)
    d_all = c2 - (c2[basis] @ T if m else 0.0)
    d_all[basis] = 0.0
    return LpResult(OPTIMAL, x, objective, total_iters,
                    reduced_costs=d_all[:n], at_upper=stat[:n] == _UB)
