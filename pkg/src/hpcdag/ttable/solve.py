"""Solvers for time-table models.

``solve_builtin`` is a depth-first branch-and-bound over the binaries. LP
relaxations are solved in floating point; every leaf is then certified in
exact arithmetic, falling back to the rational simplex when the rounded
float point does not satisfy all rows. ``solve_exhaustive`` enumerates
binary assignments and solves each LP with the rational simplex only; it is
the independent route used to cross-check the branch-and-bound.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import csr_matrix

from .model import ILPModel
from .simplex import solve_lp

BINARY_CAP = 200
_TOL = 1e-7


class SolverTimeout(RuntimeError):
    pass


class TooManyBinaries(ValueError):
    pass


@dataclass(frozen=True)
class Solution:
    status: str  # "feasible", "infeasible" or "timeout"
    x: tuple[Fraction, ...] = ()
    nodes: int = 0

    @property
    def feasible(self) -> bool:
        return self.status == "feasible"


@dataclass(frozen=True)
class Budget:
    seconds: float = 60.0
    nodes: int = 200_000


class _Relaxation:
    """Sparse matrices of a model, reused for every relaxation."""

    def __init__(self, model: ILPModel):
        ub_r, ub_c, ub_v, b_ub = [], [], [], []
        eq_r, eq_c, eq_v, b_eq = [], [], [], []
        for row in model.rows:
            sign = -1 if row.sense == ">=" else 1
            if row.sense == "=":
                i = len(b_eq)
                for j, a in row.coef:
                    eq_r.append(i), eq_c.append(j), eq_v.append(float(a))
                b_eq.append(float(row.rhs))
            else:
                i = len(b_ub)
                for j, a in row.coef:
                    ub_r.append(i), ub_c.append(j), ub_v.append(sign * float(a))
                b_ub.append(sign * float(row.rhs))
        n = len(model.vars)
        self.a_ub = csr_matrix((ub_v, (ub_r, ub_c)), shape=(len(b_ub), n)) if b_ub else None
        self.b_ub = np.array(b_ub) if b_ub else None
        self.a_eq = csr_matrix((eq_v, (eq_r, eq_c)), shape=(len(b_eq), n)) if b_eq else None
        self.b_eq = np.array(b_eq) if b_eq else None
        self.lo = np.array([float(v.lo) for v in model.vars])
        self.hi = np.array([np.inf if v.hi is None else float(v.hi) for v in model.vars])
        self.c = np.zeros(n)
        self.obj = np.zeros(n)
        for j, a in model.objective.items():
            self.obj[j] = float(a)

    def solve(self, lo: np.ndarray, hi: np.ndarray, c: np.ndarray | None = None):
        """Minimise ``c`` (zero by default); None when infeasible."""
        res = linprog(
            self.c if c is None else c,
            A_ub=self.a_ub,
            b_ub=self.b_ub,
            A_eq=self.a_eq,
            b_eq=self.b_eq,
            bounds=np.column_stack([lo, hi]),
            method="highs",
        )
        return res.x if res.status == 0 else None


def _snap(v: float) -> Fraction:
    r = round(v)
    if abs(v - r) < 1e-6:
        return Fraction(r)
    return Fraction(v).limit_denominator(10**6)


def _exact_with(model: ILPModel, fixed: dict[int, int]) -> tuple[Fraction, ...] | None:
    """Solve the LP left after fixing binaries, exactly; maximises the objective."""
    free = [j for j, v in enumerate(model.vars) if j not in fixed]
    pos = {j: i for i, j in enumerate(free)}
    rows = []
    for r in model.rows:
        coef: dict[int, Fraction] = {}
        rhs = Fraction(r.rhs)
        for j, a in r.coef:
            if j in fixed:
                rhs -= a * fixed[j]
            else:
                coef[pos[j]] = Fraction(a)
        if not coef:
            ok = (0 <= rhs) if r.sense == "<=" else (0 >= rhs) if r.sense == ">=" else rhs == 0
            if not ok:
                return None
            continue
        rows.append((coef, r.sense, rhs))
    c = [model.objective.get(j, 0) for j in free]
    res = solve_lp(c, rows, [model.vars[j].lo for j in free], [model.vars[j].hi for j in free])
    if res.status == "infeasible":
        return None
    if res.status == "unbounded":  # cannot happen with bounded times; take any point
        res = solve_lp([0] * len(free), rows, [model.vars[j].lo for j in free], [model.vars[j].hi for j in free])
    x = [Fraction(0)] * len(model.vars)
    for j, v in fixed.items():
        x[j] = Fraction(v)
    for j in free:
        x[j] = res.x[pos[j]]
    return tuple(x)


def _certify(model: ILPModel, rel: _Relaxation, fixed: dict[int, int]) -> tuple[Fraction, ...] | None:
    """Exact point for the given binaries, or None when there is none."""
    lo, hi = rel.lo.copy(), rel.hi.copy()
    for j, v in fixed.items():
        lo[j] = hi[j] = v
    # Prefer the point that maximises the objective for these binaries.
    best = rel.solve(lo, hi, -rel.obj)
    if best is not None:
        x = tuple(Fraction(fixed[j]) if j in fixed else _snap(v) for j, v in enumerate(best))
        if not model.violations(x):
            return x
    return _exact_with(model, fixed)


def _structured(model: ILPModel) -> bool:
    covered = {d[4] for d in model.disjunctions} | {d[5] for d in model.disjunctions}
    covered |= {a for group in model.partitions for a, _ in group.values()}
    return covered == set(model.binaries)


def _fix(lo: np.ndarray, hi: np.ndarray, values: dict[int, int]):
    clo, chi = lo.copy(), hi.copy()
    for j, v in values.items():
        clo[j] = chi[j] = v
    return clo, chi


def _conflict(model: ILPModel, xf: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    """Children to explore, best first, or None when ``xf`` violates nothing."""
    for group in model.partitions:
        if any(lo[a] == 1 for a, _ in group.values()):
            continue
        length = {m: sum(xf[f] - xf[s] for s, f in gov) for m, (a, gov) in group.items() if hi[a] == 1}
        used = [m for m, v in length.items() if v > _TOL]
        if len(used) > 1:
            order = sorted(length, key=lambda m: (-length[m], m))
            return [{a: int(m == pick) for m, (a, _) in group.items()} for pick in order]
    worst = None
    for f, s2, f2, s, x1, x2 in model.disjunctions:
        if lo[x1] == hi[x1]:
            continue
        if xf[f] <= xf[s2] + _TOL or xf[f2] <= xf[s] + _TOL:
            continue
        # Collisions of two real intervals first; points come last.
        solid = xf[f] - xf[s] > _TOL and xf[f2] - xf[s2] > _TOL
        overlap = min(xf[f], xf[f2]) - max(xf[s], xf[s2])
        rank = (solid, overlap)
        if worst is None or rank > worst[0]:
            first = (xf[s] + xf[f]) <= (xf[s2] + xf[f2])
            worst = (rank, x1, x2, first)
    if worst is None:
        return None
    _, x1, x2, first = worst
    before, after = {x1: 0, x2: 1}, {x1: 1, x2: 0}
    return [before, after] if first else [after, before]


def _read_binaries(model: ILPModel, xf: np.ndarray, lo: np.ndarray) -> dict[int, int]:
    fixed = {}
    for f, s2, f2, s, x1, x2 in model.disjunctions:
        if lo[x1] == 1 or (lo[x1] == 0 and lo[x2] == 1):
            fixed[x1], fixed[x2] = int(lo[x1]), int(lo[x2])
        elif xf[f] <= xf[s2] + _TOL:
            fixed[x1], fixed[x2] = 0, 1
        else:
            fixed[x1], fixed[x2] = 1, 0
    for group in model.partitions:
        pinned = [m for m, (a, _) in group.items() if lo[a] == 1]
        if pinned:
            pick = pinned[0]
        else:
            length = {m: sum(xf[f] - xf[s] for s, f in gov) for m, (a, gov) in group.items()}
            pick = max(sorted(length), key=lambda m: length[m])
        for m, (a, _) in group.items():
            fixed[a] = int(m == pick)
    return fixed


def _first_open(model: ILPModel, lo: np.ndarray, hi: np.ndarray):
    for f, s2, f2, s, x1, x2 in model.disjunctions:
        if lo[x1] != hi[x1]:
            return [{x1: 0, x2: 1}, {x1: 1, x2: 0}]
    for group in model.partitions:
        if not any(lo[a] == 1 for a, _ in group.values()):
            return [{a: int(m == pick) for m, (a, _) in group.items()} for pick in sorted(group)]
    return None


def solve_builtin(model: ILPModel, budget: Budget | float | None = None, cap: int = BINARY_CAP) -> Solution:
    """Depth-first branch-and-bound; the first certified leaf is returned.

    On time-table models the search branches on violated structure: an
    overlapping pair whose order is still open, or a sub-task spread over
    several engines under partitioning. Relaxations minimise the total
    interval length so that few pairs collide. Other models branch on
    fractional binaries.
    """
    if isinstance(budget, (int, float)):
        budget = Budget(seconds=float(budget))
    budget = budget or Budget()
    bins = model.binaries
    if len(bins) > cap:
        raise TooManyBinaries(f"{len(bins)} binaries exceed the cap of {cap}")
    if not model.vars:
        return Solution("feasible", (), 0)
    start = time.monotonic()
    rel = _Relaxation(model)
    structured = _structured(model)
    stack = [(rel.lo.copy(), rel.hi.copy())]
    nodes = 0
    while stack:
        if nodes >= budget.nodes or time.monotonic() - start > budget.seconds:
            return Solution("timeout", nodes=nodes)
        lo, hi = stack.pop()
        nodes += 1
        if structured:
            xf = rel.solve(lo, hi, rel.obj)
            if xf is None:
                continue
            children = _conflict(model, xf, lo, hi)
            if children is None:
                x = _certify(model, rel, _read_binaries(model, xf, lo))
                if x is not None:
                    return Solution("feasible", x, nodes)
                # Floating point misjudged this leaf; keep the search complete.
                children = _first_open(model, lo, hi)
                if children is None:
                    continue
        else:
            xf = rel.solve(lo, hi)
            if xf is None:
                continue
            frac = [(abs(xf[j] - 0.5), j) for j in bins if _TOL < xf[j] < 1 - _TOL]
            if not frac:
                x = _certify(model, rel, {j: int(round(xf[j])) for j in bins})
                if x is not None:
                    return Solution("feasible", x, nodes)
                free = [j for j in bins if lo[j] != hi[j]]
                if not free:
                    continue
                j = free[0]
            else:
                j = min(frac)[1]
            near = 1 if xf[j] >= 0.5 else 0
            children = [{j: near}, {j: 1 - near}]
        for values in reversed(children):  # best child is popped first
            stack.append(_fix(lo, hi, values))
    return Solution("infeasible", nodes=nodes)


def solve_exhaustive(model: ILPModel, limit: int = 20) -> Solution:
    """Every binary assignment, each LP solved in exact arithmetic."""
    bins = model.binaries
    if len(bins) > limit:
        raise TooManyBinaries(f"{len(bins)} binaries exceed the enumeration limit of {limit}")
    bset = set(bins)
    pure = [r for r in model.rows if all(j in bset for j, _ in r.coef)]
    count = 0
    for values in itertools.product((0, 1), repeat=len(bins)):
        count += 1
        fixed = dict(zip(bins, values))
        probe = [fixed.get(j, 0) for j in range(len(model.vars))]
        if not all(r.holds(probe) for r in pure):
            continue
        x = _exact_with(model, fixed)
        if x is not None:
            return Solution("feasible", x, count)
    return Solution("infeasible", nodes=count)


def solve_highs(model: ILPModel, budget: Budget | float | None = None) -> Solution:
    """Optional external route through HiGHS' own MILP solver."""
    from scipy.optimize import Bounds, LinearConstraint, milp

    if isinstance(budget, (int, float)):
        budget = Budget(seconds=float(budget))
    budget = budget or Budget()
    if not model.vars:
        return Solution("feasible", ())
    rel = _Relaxation(model)
    cons = []
    if rel.a_ub is not None:
        cons.append(LinearConstraint(rel.a_ub, -np.inf, rel.b_ub))
    if rel.a_eq is not None:
        cons.append(LinearConstraint(rel.a_eq, rel.b_eq, rel.b_eq))
    integrality = np.array([1 if v.binary else 0 for v in model.vars])
    res = milp(
        rel.c, constraints=cons, integrality=integrality, bounds=Bounds(rel.lo, rel.hi),
        options={"time_limit": budget.seconds},
    )
    if res.status == 1:
        return Solution("timeout")
    if res.x is None:
        return Solution("infeasible")
    x = _certify(model, rel, {j: int(round(res.x[j])) for j in model.binaries})
    return Solution("feasible", x) if x is not None else Solution("infeasible")


SOLVERS = {"builtin": solve_builtin, "highs": solve_highs}

__all__ = [
    "BINARY_CAP",
    "Budget",
    "SOLVERS",
    "Solution",
    "SolverTimeout",
    "TooManyBinaries",
    "solve_builtin",
    "solve_exhaustive",
    "solve_highs",
]
