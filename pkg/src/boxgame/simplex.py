"""Dense two-phase primal simplex solver.

Solves   min c @ x   s.t.  a_ub @ x <= b_ub,  a_eq @ x = b_eq,  x >= 0
on small dense problems.  Pivoting uses Dantzig's rule for speed and
falls back to Bland's rule after a run of degenerate pivots, which
guarantees termination.  After the optimal basis is found the basic
solution is re-solved against the original constraint system so the
reported point is accurate to machine precision rather than to the
accumulated tableau roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import SolverError

__all__ = ["LPSolution", "solve_lp"]

# Pivot eligibility / optimality thresholds.  These are internal to the
# tableau sweep; final accuracy comes from the basis re-solve.
_REDCOST_TOL = 1e-10
_PIVOT_TOL = 1e-11
_DEGENERATE_TOL = 1e-12


@dataclass(frozen=True)
class LPSolution:
    x: np.ndarray
    objective: float
    pivots: int


def _pivot(tableau: np.ndarray, row: int, col: int) -> None:
    tableau[row] /= tableau[row, col]
    factors = tableau[:, col].copy()
    factors[row] = 0.0
    tableau -= np.outer(factors, tableau[row])
    # Kill roundoff in the pivot column so basic columns stay unit.
    tableau[:, col] = 0.0
    tableau[row, col] = 1.0


def _run_simplex(
    tableau: np.ndarray, basis: np.ndarray, n_cols: int, max_pivots: int
) -> int:
    """Iterate pivots until the bottom (cost) row is optimal.

    Returns the pivot count; raises on unboundedness or pivot exhaustion.
    """
    m = tableau.shape[0] - 1
    pivots = 0
    stalled = 0
    stall_limit = 8 * (m + n_cols) + 64
    while True:
        cost = tableau[-1, :n_cols]
        if stalled <= stall_limit:
            col = int(np.argmin(cost))
            if cost[col] >= -_REDCOST_TOL:
                return pivots
        else:
            # Bland: lowest-index improving column escapes cycling.
            eligible = np.nonzero(cost < -_REDCOST_TOL)[0]
            if eligible.size == 0:
                return pivots
            col = int(eligible[0])

        column = tableau[:m, col]
        rhs = tableau[:m, -1]
        ratios = np.full(m, np.inf)
        positive = column > _PIVOT_TOL
        ratios[positive] = rhs[positive] / column[positive]
        best = ratios.min()
        if not np.isfinite(best):
            raise SolverError("linear program is unbounded")
        ties = np.nonzero(ratios <= best + _DEGENERATE_TOL * (1.0 + abs(best)))[0]
        # Among ratio ties, leave by lowest basis-variable index (Bland-safe).
        row = int(ties[np.argmin(basis[ties])])

        stalled = stalled + 1 if rhs[row] <= _DEGENERATE_TOL else 0
        _pivot(tableau, row, col)
        basis[row] = col
        pivots += 1
        if pivots > max_pivots:
            raise SolverError(
                f"simplex pivot limit exceeded after {pivots} pivots "
                "(cycling guard); problem may be degenerate beyond tolerance"
            )


def solve_lp(
    c: np.ndarray,
    a_ub: Optional[np.ndarray] = None,
    b_ub: Optional[np.ndarray] = None,
    a_eq: Optional[np.ndarray] = None,
    b_eq: Optional[np.ndarray] = None,
    max_pivots: Optional[int] = None,
) -> LPSolution:
    """Minimize c @ x over x >= 0 subject to the given constraints."""
    c = np.asarray(c, dtype=float)
    n = c.shape[0]
    blocks = []
    rhs_parts = []
    n_ub = 0
    if a_ub is not None:
        a_ub = np.asarray(a_ub, dtype=float).reshape(-1, n)
        b_ub = np.asarray(b_ub, dtype=float).ravel()
        n_ub = a_ub.shape[0]
        blocks.append(np.hstack([a_ub, np.eye(n_ub)]))
        rhs_parts.append(b_ub)
    if a_eq is not None:
        a_eq = np.asarray(a_eq, dtype=float).reshape(-1, n)
        b_eq = np.asarray(b_eq, dtype=float).ravel()
        pad = np.zeros((a_eq.shape[0], n_ub))
        blocks.append(np.hstack([a_eq, pad]))
        rhs_parts.append(b_eq)
    if not blocks:
        raise ValueError("at least one constraint block is required")

    a = np.vstack(blocks)
    b = np.concatenate(rhs_parts)
    m, n_total = a.shape
    row_ids = np.arange(m)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b)) and np.all(np.isfinite(c))):
        raise ValueError("LP data must be finite")

    flip = b < 0.0
    a[flip] *= -1.0
    b[flip] *= -1.0

    cost_full = np.concatenate([c, np.zeros(n_total - n)])
    if max_pivots is None:
        max_pivots = 200 * (m + n_total) + 1000

    # A slack column can seed the basis only for <= rows that kept their sign.
    basis = np.full(m, -1, dtype=int)
    for i in range(n_ub):
        if not flip[i]:
            basis[i] = n + i
    need_artificial = np.nonzero(basis < 0)[0]
    pivots_total = 0

    if need_artificial.size > 0:
        n_art = need_artificial.size
        art_block = np.zeros((m, n_art))
        for k, i in enumerate(need_artificial):
            art_block[i, k] = 1.0
            basis[i] = n_total + k
        tableau = np.zeros((m + 1, n_total + n_art + 1))
        tableau[:m, :n_total] = a
        tableau[:m, n_total : n_total + n_art] = art_block
        tableau[:m, -1] = b
        # Phase-1 cost: sum of artificials, priced out over the initial basis.
        tableau[-1, n_total : n_total + n_art] = 1.0
        for i in need_artificial:
            tableau[-1] -= tableau[i]
        pivots_total += _run_simplex(tableau, basis, n_total + n_art, max_pivots)
        if tableau[-1, -1] < -1e-7:
            raise SolverError(
                f"linear program infeasible (phase-1 residual {-tableau[-1, -1]:.3e})"
            )
        # Drive leftover artificials out of the basis or drop their rows.
        keep = np.ones(m, dtype=bool)
        for i in range(m):
            if basis[i] >= n_total:
                row = tableau[i, :n_total]
                candidates = np.nonzero(np.abs(row) > 1e-9)[0]
                if candidates.size == 0:
                    keep[i] = False
                else:
                    _pivot(tableau, i, int(candidates[0]))
                    basis[i] = int(candidates[0])
        tableau = np.hstack([tableau[:, :n_total], tableau[:, -1:]])
        tableau = np.vstack([tableau[:m][keep], tableau[-1:]])
        basis = basis[keep]
        row_ids = row_ids[keep]
        m = tableau.shape[0] - 1
    else:
        tableau = np.zeros((m + 1, n_total + 1))
        tableau[:m, :n_total] = a
        tableau[:m, -1] = b

    # Phase 2: install the real costs and price out the current basis.
    tableau[-1, :] = 0.0
    tableau[-1, :n_total] = cost_full
    for i in range(m):
        cb = cost_full[basis[i]]
        if cb != 0.0:
            tableau[-1] -= cb * tableau[i]
    pivots_total += _run_simplex(tableau, basis, n_total, max_pivots)

    # Re-solve the basic system against the original data for accuracy.
    x = np.zeros(n_total)
    try:
        x[basis] = np.linalg.solve(a[row_ids][:, basis], b[row_ids])
    except np.linalg.LinAlgError:
        x[basis] = tableau[:m, -1]
    np.clip(x, 0.0, None, out=x)
    objective = float(cost_full @ x)
    return LPSolution(x=x[:n], objective=objective, pivots=pivots_total)
