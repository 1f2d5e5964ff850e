"""Minimal bounded-variable linear-program solver.

Primal simplex on the computational form  A x = b,  l <= x <= u,  obtained by
adding one slack per inequality.  Phase 1 drives artificial variables to zero,
phase 2 optimizes the user objective.  Bland's smallest-index rule is used for
both the entering and the leaving choice, which prevents cycling and makes the
solver deterministic.  Problem sizes in this package stay below a few dozen
variables, so every iteration simply refactorizes the (tiny) basis.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Relation",
    "Sense",
    "LpStatus",
    "Constraint",
    "LinearProgram",
    "LpSolution",
    "solve",
]

_AT_LOWER = 0
_AT_UPPER = 1
_BASIC = 2


class Relation(enum.Enum):
    EQ = "="
    LE = "<="
    GE = ">="


class Sense(enum.Enum):
    MIN = "min"
    MAX = "max"


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class Constraint:
    coefficients: tuple[float, ...]
    relation: Relation
    rhs: float


@dataclass
class LinearProgram:
    """Bounded variables, linear constraints, linear objective."""

    num_vars: int
    lower_bounds: np.ndarray
    upper_bounds: np.ndarray
    constraints: list[Constraint] = field(default_factory=list)
    objective: np.ndarray | None = None
    sense: Sense = Sense.MIN

    def __post_init__(self) -> None:
        if self.num_vars < 1:
            raise ValueError("num_vars must be positive")
        self.lower_bounds = np.asarray(self.lower_bounds, dtype=float)
        self.upper_bounds = np.asarray(self.upper_bounds, dtype=float)
        if self.lower_bounds.shape != (self.num_vars,) or self.upper_bounds.shape != (self.num_vars,):
            raise ValueError("bound vectors must have length num_vars")
        if np.any(np.isnan(self.lower_bounds)) or np.any(np.isnan(self.upper_bounds)):
            raise ValueError("bounds must not contain NaN")
        if np.any(self.lower_bounds > self.upper_bounds):
            raise ValueError("lower bound exceeds upper bound")
        if self.objective is None:
            self.objective = np.zeros(self.num_vars)
        self.objective = np.asarray(self.objective, dtype=float)
        if self.objective.shape != (self.num_vars,):
            raise ValueError("objective must have length num_vars")
        if not np.all(np.isfinite(self.objective)):
            raise ValueError("objective coefficients must be finite")
        for con in self.constraints:
            if len(con.coefficients) != self.num_vars:
                raise ValueError("constraint length mismatch")
            if not all(np.isfinite(c) for c in con.coefficients) or not np.isfinite(con.rhs):
                raise ValueError("constraint coefficients must be finite")

    def add_constraint(self, coefficients, relation: Relation, rhs: float) -> None:
        coeffs = tuple(float(c) for c in coefficients)
        con = Constraint(coeffs, relation, float(rhs))
        if len(coeffs) != self.num_vars:
            raise ValueError("constraint length mismatch")
        if not all(np.isfinite(c) for c in coeffs) or not np.isfinite(con.rhs):
            raise ValueError("constraint coefficients must be finite")
        self.constraints.append(con)


@dataclass
class LpSolution:
    status: LpStatus
    objective_value: float
    variable_values: np.ndarray
    solver_iterations: int


def solve(lp: LinearProgram, feasibility_tol: float = 1e-9, pivot_tol: float = 1e-11) -> LpSolution:
    """Solve to an optimal basic solution, or report INFEASIBLE / UNBOUNDED."""
    n0 = lp.num_vars
    m = len(lp.constraints)
    n_slack = sum(1 for c in lp.constraints if c.relation is not Relation.EQ)
    nt = n0 + n_slack + m  # structural + slack + artificial

    A = np.zeros((m, nt))
    b = np.empty(m)
    lower = np.full(nt, -np.inf)
    upper = np.full(nt, np.inf)
    lower[:n0] = lp.lower_bounds
    upper[:n0] = lp.upper_bounds

    slack_col = n0
    for i, con in enumerate(lp.constraints):
        A[i, :n0] = con.coefficients
        b[i] = con.rhs
        if con.relation is not Relation.EQ:
            A[i, slack_col] = 1.0 if con.relation is Relation.LE else -1.0
            lower[slack_col] = 0.0
            slack_col += 1

    # Start every non-artificial variable at a finite bound (0 if free).
    x = np.zeros(nt)
    for j in range(n0 + n_slack):
        if np.isfinite(lower[j]):
            x[j] = lower[j]
        elif np.isfinite(upper[j]):
            x[j] = upper[j]
    status = np.where(
        np.isfinite(lower) | ~np.isfinite(upper), _AT_LOWER, _AT_UPPER
    ).astype(np.int8)

    art0 = n0 + n_slack
    residual = b - A[:, : art0] @ x[:art0]
    basis = np.empty(m, dtype=np.intp)
    for i in range(m):
        col = art0 + i
        A[i, col] = 1.0 if residual[i] >= 0 else -1.0
        lower[col] = 0.0
        x[col] = abs(residual[i])
        basis[i] = col
        status[col] = _BASIC

    cost1 = np.zeros(nt)
    cost1[art0:] = 1.0
    iterations = 0

    res, iterations = _simplex(A, b, lower, upper, cost1, x, basis, status, pivot_tol, iterations)
    if res == "unbounded":  # phase 1 is bounded below; numerical failure only
        return LpSolution(LpStatus.INFEASIBLE, float("nan"), x[:n0].copy(), iterations)
    scale = max(1.0, float(np.max(np.abs(b))) if m else 1.0)
    if float(cost1 @ x) > feasibility_tol * scale:
        return LpSolution(LpStatus.INFEASIBLE, float("nan"), x[:n0].copy(), iterations)

    # Phase 2: freeze artificials at zero and optimize the real objective.
    upper[art0:] = 0.0
    x[art0:] = np.minimum(x[art0:], 0.0)
    cost2 = np.zeros(nt)
    sign = 1.0 if lp.sense is Sense.MIN else -1.0
    cost2[:n0] = sign * lp.objective
    res, iterations = _simplex(A, b, lower, upper, cost2, x, basis, status, pivot_tol, iterations)
    if res == "unbounded":
        return LpSolution(LpStatus.UNBOUNDED, float("nan"), x[:n0].copy(), iterations)

    # Refresh basic values once from the final basis, then clamp to bounds.
    nonbasic_mask = status != _BASIC
    rhs = b - A[:, nonbasic_mask] @ x[nonbasic_mask]
    if m:
        x[basis] = np.linalg.solve(A[:, basis], rhs)
    values = np.clip(x[:n0], lp.lower_bounds, lp.upper_bounds)
    objective = float(lp.objective @ values)
    return LpSolution(LpStatus.OPTIMAL, objective, values, iterations)


def _simplex(A, b, lower, upper, cost, x, basis, status, pivot_tol, iterations):
    """Run primal simplex from a feasible basis; returns ("optimal"|"unbounded", iters)."""
    m, nt = A.shape
    max_iter = 500 * (nt + m + 1)
    for _ in range(max_iter):
        iterations += 1
        B = A[:, basis]
        y = np.linalg.solve(B.T, cost[basis]) if m else np.empty(0)
        reduced = cost - A.T @ y

        entering = -1
        direction = 0.0
        for j in range(nt):
            st = status[j]
            if st == _BASIC or upper[j] - lower[j] <= 0.0:
                continue
            dj = reduced[j]
            if st == _AT_LOWER and dj < -pivot_tol:
                entering, direction = j, 1.0
                break
            if st == _AT_UPPER and dj > pivot_tol:
                entering, direction = j, -1.0
                break
        if entering < 0:
            return "optimal", iterations

        w = np.linalg.solve(B, A[:, entering]) if m else np.empty(0)

        t_best = upper[entering] - lower[entering]  # bound-flip cap, may be inf
        leave_pos = -1
        leave_to_lower = True
        for p in range(m):
            k = basis[p]
            wp = direction * w[p]
            if wp > pivot_tol:
                cap = (x[k] - lower[k]) / wp
                to_lower = True
            elif wp < -pivot_tol:
                cap = (upper[k] - x[k]) / (-wp)
                to_lower = False
            else:
                continue
            if cap < 0.0:
                cap = 0.0
            tie = abs(cap - t_best) <= 1e-12 * (1.0 + abs(t_best))
            if cap < t_best and not tie:
                t_best, leave_pos, leave_to_lower = cap, p, to_lower
            elif tie and leave_pos >= 0 and basis[p] < basis[leave_pos]:
                leave_pos, leave_to_lower = p, to_lower
            elif tie and leave_pos < 0 and cap <= t_best:
                t_best, leave_pos, leave_to_lower = cap, p, to_lower
        if not np.isfinite(t_best):
            return "unbounded", iterations

        if m and t_best != 0.0:
            x[basis] -= t_best * direction * w
        if leave_pos < 0:
            # Bound flip: the entering variable jumps to its other bound.
            x[entering] = upper[entering] if direction > 0 else lower[entering]
            status[entering] = _AT_UPPER if direction > 0 else _AT_LOWER
        else:
            start = lower[entering] if direction > 0 else upper[entering]
            x[entering] = start + direction * t_best
            k_out = basis[leave_pos]
            if leave_to_lower:
                x[k_out] = lower[k_out]
                status[k_out] = _AT_LOWER
            else:
                x[k_out] = upper[k_out]
                status[k_out] = _AT_UPPER
            basis[leave_pos] = entering
            status[entering] = _BASIC
    raise RuntimeError("simplex iteration limit exceeded")
