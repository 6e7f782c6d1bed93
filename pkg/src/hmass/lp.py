"""Self-contained dense primal simplex solver.

Minimizes c.x subject to mixed <=, =, >= rows and per-variable bounds
[lo, hi] with lo >= 0.  Two phases, Dantzig pricing with lowest-index tie
breaking, switching to Bland's rule once a degeneracy counter trips, and
periodic refactorization of the tableau from the current basis.  Fully
deterministic: identical inputs give identical solutions bit for bit.

This is deliberately a dense tableau code: every problem built by the
flat-norm layer is at desk scale (<= ~10^4 variables).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["LPProblem", "LPSolution", "LPError", "LPNumericalError", "solve"]

_PIVOT_TOL = 1e-10
_FEAS_TOL = 1e-9
_REFACTOR_EVERY = 64
_COND_LIMIT = 1e13


class LPError(ValueError):
    pass


class LPNumericalError(LPError):
    """Numerical breakdown, reported distinctly from infeasibility."""


@dataclass(frozen=True)
class LPProblem:
    """min c.x  s.t.  A x (sense) b,  lo <= x <= hi elementwise.

    senses: tuple of "<=", "=", ">=" per row.  bounds default to
    (0, +inf); lower bounds must be nonnegative (free variables are the
    caller's job, via sign splitting).
    """

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    senses: tuple[str, ...]
    bounds: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        if A.shape != (b.size, c.size):
            raise LPError(f"shape mismatch: A{A.shape}, b{b.shape}, c{c.shape}")
        if len(self.senses) != b.size:
            raise LPError("one sense per row required")
        if any(s not in ("<=", "=", ">=") for s in self.senses):
            raise LPError(f"bad senses {self.senses}")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise LPError("non-finite problem data")
        bounds = self.bounds or tuple((0.0, math.inf) for _ in range(c.size))
        if len(bounds) != c.size:
            raise LPError("one bound pair per variable required")
        for lo, hi in bounds:
            if lo < 0 or hi < lo:
                raise LPError(f"bounds must satisfy 0 <= lo <= hi, got ({lo}, {hi})")
        object.__setattr__(self, "bounds", tuple((float(l), float(h)) for l, h in bounds))


@dataclass(frozen=True)
class LPSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray
    objective_value: float
    basis: tuple[int, ...] = ()


class _Tableau:
    """Equality-form tableau  [B^-1 A | B^-1 b]  with explicit basis list."""

    def __init__(self, A, b, n_struct):
        self.A0 = A.copy()  # original equality-form matrix, for refactorization
        self.b0 = b.copy()
        self.T = np.hstack([A.copy(), b.copy().reshape(-1, 1)])
        self.basis = [-1] * A.shape[0]
        self.n_struct = n_struct
        self.pivots = 0

    @property
    def nrows(self):
        return self.T.shape[0]

    @property
    def ncols(self):
        return self.T.shape[1] - 1

    def pivot(self, row, col):
        T = self.T
        piv = T[row, col]
        if abs(piv) < _PIVOT_TOL:
            raise LPNumericalError(f"pivot element too small: {piv:.3e}")
        T[row] = T[row] / piv
        colvals = T[:, col].copy()
        colvals[row] = 0.0
        T -= np.outer(colvals, T[row])
        self.basis[row] = col
        self.pivots += 1
        if self.pivots % _REFACTOR_EVERY == 0:
            self.refactorize()

    def refactorize(self):
        B = self.A0[:, self.basis]
        cond = np.linalg.cond(B)
        if not np.isfinite(cond) or cond > _COND_LIMIT:
            raise LPNumericalError(f"basis condition estimate {cond:.3e} exceeds limit")
        rhs = np.hstack([self.A0, self.b0.reshape(-1, 1)])
        self.T = np.linalg.solve(B, rhs)

    def solution(self, nvars):
        x = np.zeros(nvars)
        for r, col in enumerate(self.basis):
            if col < nvars:
                x[col] = self.T[r, -1]
        return x


def _run_simplex(tab: _Tableau, cost: np.ndarray, allowed_cols):
    """Iterate to optimality of cost over the allowed columns.

    Returns (objective, reduced_costs, duals_y).  Raises on breakdown,
    returns objective -inf on unboundedness (signalled via LPUnbounded).
    """
    allowed = np.zeros(tab.ncols, dtype=bool)
    allowed[list(allowed_cols)] = True
    degenerate_streak = 0
    bland = False
    max_iter = 5000 + 60 * (tab.nrows + tab.ncols)

    for _ in range(max_iter):
        cb = cost[tab.basis]
        # reduced costs r = c - cb . T  (columns of the current tableau)
        red = cost[: tab.ncols] - cb @ tab.T[:, : tab.ncols]
        red[~allowed] = 0.0
        if bland:
            entering = -1
            for j in range(tab.ncols):
                if allowed[j] and red[j] < -_PIVOT_TOL:
                    entering = j
                    break
        else:
            entering = int(np.argmin(red))
            if red[entering] >= -_PIVOT_TOL:
                entering = -1
        if entering < 0:
            obj = float(cb @ tab.T[:, -1])
            return obj, red

        col = tab.T[:, entering]
        rhs = tab.T[:, -1]
        ratios = np.full(tab.nrows, np.inf)
        mask = col > _PIVOT_TOL
        ratios[mask] = rhs[mask] / col[mask]
        if not mask.any():
            raise _Unbounded(entering)
        best = np.min(ratios)
        candidates = np.flatnonzero(ratios <= best + 1e-12)
        if bland:
            # leaving variable with the smallest index
            row = min(candidates, key=lambda r: tab.basis[r])
        else:
            row = int(candidates[0])
        if best <= 1e-12:
            degenerate_streak += 1
            if degenerate_streak > 2 * (tab.nrows + tab.ncols):
                bland = True
        else:
            degenerate_streak = 0
        tab.pivot(int(row), entering)
    raise LPNumericalError("simplex iteration limit exceeded")


class _Unbounded(Exception):
    def __init__(self, col):
        self.col = col


def _to_equality_form(problem: LPProblem):
    """Shift lower bounds, add rows for finite upper bounds, add slacks.

    Returns (A_eq, b_eq, cost_eq, n_struct, lo_shift).
    """
    c = problem.c
    A = problem.A
    b = problem.b.copy().astype(float)
    senses = list(problem.senses)
    lo = np.array([bd[0] for bd in problem.bounds])
    hi = np.array([bd[1] for bd in problem.bounds])

    # substitute x = lo + x'
    if lo.any():
        b = b - A @ lo
    rows = [A]
    rhs = [b]
    for j in np.flatnonzero(np.isfinite(hi)):
        row = np.zeros(c.size)
        row[j] = 1.0
        rows.append(row.reshape(1, -1))
        rhs.append(np.array([hi[j] - lo[j]]))
        senses.append("<=")
    A = np.vstack(rows)
    b = np.concatenate(rhs)

    # orient rows to b >= 0
    flip = b < 0
    A[flip] *= -1
    b[flip] *= -1
    flipped_senses = {"<=": ">=", ">=": "<=", "=": "="}
    senses = [flipped_senses[s] if f else s for s, f in zip(senses, flip)]

    # slacks / surpluses
    n = c.size
    m = A.shape[0]
    slack_cols = []
    slack_rows = []
    for i, s in enumerate(senses):
        if s == "<=":
            slack_rows.append(i)
            slack_cols.append(1.0)
        elif s == ">=":
            slack_rows.append(i)
            slack_cols.append(-1.0)
    S = np.zeros((m, len(slack_rows)))
    for k, (i, v) in enumerate(zip(slack_rows, slack_cols)):
        S[i, k] = v
    A_eq = np.hstack([A, S])
    cost = np.concatenate([c, np.zeros(len(slack_rows))])
    return A_eq, b, cost, n, lo


def solve(problem: LPProblem) -> LPSolution:
    """Solve to a certified optimal basic solution (or infeasible/unbounded)."""
    A_eq, b_eq, cost, n_struct, lo_shift = _to_equality_form(problem)
    m, n_total = A_eq.shape

    # Phase 1: artificial basis
    art = np.eye(m)
    tab = _Tableau(np.hstack([A_eq, art]), b_eq, n_struct)
    tab.basis = list(range(n_total, n_total + m))
    phase1_cost = np.concatenate([np.zeros(n_total), np.ones(m)])
    try:
        # artificials may leave but never re-enter
        p1_obj, _ = _run_simplex(tab, phase1_cost, range(n_total))
    except _Unbounded:  # pragma: no cover - phase 1 objective is bounded below
        raise LPNumericalError("phase 1 unbounded: inconsistent tableau")
    if p1_obj > 1e-7 * (1.0 + float(np.abs(b_eq).max(initial=0.0))):
        return LPSolution("infeasible", np.full(problem.c.size, np.nan), math.inf)

    # drive surviving artificials out of the basis (or drop redundant rows)
    drop_rows = []
    for r in range(m):
        if tab.basis[r] >= n_total:
            cols = np.abs(tab.T[r, :n_total])
            j = int(np.argmax(cols))
            if cols[j] > _PIVOT_TOL:
                tab.pivot(r, j)
            else:
                drop_rows.append(r)
    if drop_rows:
        keep = [r for r in range(m) if r not in drop_rows]
        tab.T = tab.T[keep]
        tab.A0 = tab.A0[keep]
        tab.b0 = tab.b0[keep]
        tab.basis = [tab.basis[r] for r in keep]
        m = len(keep)

    # Phase 2 over structural + slack columns only
    tab.T = np.hstack([tab.T[:, :n_total], tab.T[:, -1:]])
    tab.A0 = tab.A0[:, :n_total]
    try:
        obj, red = _run_simplex(tab, cost, range(n_total))
    except _Unbounded:
        return LPSolution("unbounded", np.full(problem.c.size, np.nan), -math.inf)

    x_eq = tab.solution(n_total)
    x = x_eq[:n_struct] + lo_shift
    obj_orig = float(problem.c @ x)
    _verify(problem, x, red, n_struct)
    return LPSolution("optimal", x, obj_orig, tuple(tab.basis))


def _verify(problem: LPProblem, x, reduced_costs, n_struct):
    """Feasibility, dual-sign and complementary-slackness sanity checks."""
    resid_scale = 1e-8 * (1.0 + float(np.abs(problem.b).max(initial=0.0)))
    Ax = problem.A @ x
    for i, s in enumerate(problem.senses):
        r = Ax[i] - problem.b[i]
        bad = (s == "=" and abs(r) > resid_scale) or (
            s == "<=" and r > resid_scale) or (s == ">=" and r < -resid_scale)
        if bad:
            raise LPNumericalError(
                f"row {i} infeasible by {r:.3e} in returned optimum")
    # reduced costs of structural variables certify optimality; complementary
    # slackness: a strictly positive variable must have ~zero reduced cost.
    rc = reduced_costs[:n_struct]
    scale = 1.0 + float(np.abs(problem.c).max(initial=0.0))
    if np.any(rc < -1e-7 * scale):
        raise LPNumericalError("negative reduced cost at claimed optimum")
    cs = np.abs((x - np.array([b[0] for b in problem.bounds])) * rc)
    if np.any(cs > 1e-7 * scale * (1.0 + np.abs(x))):
        raise LPNumericalError("complementary slackness residual too large")
