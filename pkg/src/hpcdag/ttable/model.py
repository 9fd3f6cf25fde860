"""Mixed-integer model for time-triggered schedule tables.

Every job of every executing sub-task owns ``nb`` execution intervals on
each engine of its tag. Intervals may shrink to zero length, so adding
intervals never removes solutions.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from ..expand import UnknownTag
from ..model import BRANCHING, Architecture, TaskSpec, hyperperiod
from ..timing import ilp_split_inflation

Number = int | Fraction


class Method(str, enum.Enum):
    GLOBAL = "global"
    PARTITIONED = "partitioned"


class UnsupportedNodeKind(ValueError):
    pass


@dataclass(frozen=True)
class Var:
    name: str
    lo: Number
    hi: Number | None
    binary: bool = False


@dataclass(frozen=True)
class Row:
    coef: tuple[tuple[int, Number], ...]
    sense: str  # "<=", ">=" or "="
    rhs: Number

    def value(self, x: Sequence[Number]) -> Number:
        return sum((a * x[j] for j, a in self.coef), 0)

    def holds(self, x: Sequence[Number]) -> bool:
        v = self.value(x)
        if self.sense == "<=":
            return v <= self.rhs
        if self.sense == ">=":
            return v >= self.rhs
        return v == self.rhs


# Interval key: (task, node, job, interval, engine).
IKey = tuple[int, int, int, int, int]


@dataclass
class ILPModel:
    vars: list[Var] = field(default_factory=list)
    rows: list[Row] = field(default_factory=list)
    objective: dict[int, Number] = field(default_factory=dict)
    big_m: int = 0
    method: Method = Method.GLOBAL
    iteration: int = 0
    hyperperiod: int = 0
    # Bookkeeping used to turn a solution into a table.
    intervals: dict[IKey, tuple[int, int]] = field(default_factory=dict)
    demand: dict[tuple[int, int], int] = field(default_factory=dict)
    n_intervals: dict[tuple[int, int], int] = field(default_factory=dict)
    # Structure the solver branches on: (f, s2, f2, s, x1, x2) per
    # disjunction, and per sub-task its partition selectors with the
    # (start, finish) pairs each selector governs.
    disjunctions: list[tuple[int, int, int, int, int, int]] = field(default_factory=list)
    partitions: list[dict[int, tuple[int, list[tuple[int, int]]]]] = field(default_factory=list)
    _index: dict[str, int] = field(default_factory=dict, repr=False)

    def add_var(self, name: str, lo: Number, hi: Number | None, binary: bool = False) -> int:
        if name in self._index:
            raise ValueError(f"duplicate variable {name}")
        self._index[name] = len(self.vars)
        self.vars.append(Var(name, lo, hi, binary))
        return len(self.vars) - 1

    def index(self, name: str) -> int:
        return self._index[name]

    def add_row(self, coef: Iterable[tuple[int, Number]], sense: str, rhs: Number) -> Row:
        merged: dict[int, Number] = {}
        for j, a in coef:
            merged[j] = merged.get(j, 0) + a
        row = Row(tuple((j, a) for j, a in sorted(merged.items()) if a), sense, rhs)
        self.rows.append(row)
        return row

    def add_disjunction(self, f: int, s2: int, f2: int, s: int) -> tuple[int, int]:
        """Require ``f <= s2`` or ``f2 <= s``; returns the two selectors."""
        n = self.n_binaries
        x1 = self.add_var(f"x{n}", 0, 1, True)
        x2 = self.add_var(f"x{n + 1}", 0, 1, True)
        self.rows.extend(linearize_disjunction(f, s2, f2, s, self.big_m, x1, x2))
        self.disjunctions.append((f, s2, f2, s, x1, x2))
        return x1, x2

    @property
    def binaries(self) -> list[int]:
        return [j for j, v in enumerate(self.vars) if v.binary]

    @property
    def n_binaries(self) -> int:
        return sum(v.binary for v in self.vars)

    def violations(self, x: Sequence[Number]) -> list[str]:
        """Exact check of bounds, integrality and every row."""
        bad = []
        for j, v in enumerate(self.vars):
            if x[j] < v.lo or (v.hi is not None and x[j] > v.hi):
                bad.append(f"{v.name} out of bounds")
            elif v.binary and x[j] not in (0, 1):
                bad.append(f"{v.name} not binary")
        bad += [f"c{i}" for i, r in enumerate(self.rows) if not r.holds(x)]
        return bad


def linearize_disjunction(f: int, s2: int, f2: int, s: int, big_m: int, x1: int, x2: int) -> list[Row]:
    """Big-M rows for ``f <= s2`` or ``f2 <= s``.

    ``x1 = 0`` enforces the first alternative and ``x2 = 0`` the second;
    exactly one selector is 1, so one alternative is always active.
    """
    return [
        Row(((f, 1), (s2, -1), (x1, -big_m)), "<=", 0),
        Row(((f, 1), (s2, -1), (x1, -big_m)), ">=", -big_m),
        Row(((f2, 1), (s, -1), (x2, -big_m)), "<=", 0),
        Row(((f2, 1), (s, -1), (x2, -big_m)), ">=", -big_m),
        Row(((x1, 1), (x2, 1)), "=", 1),
    ]


def nb_intervals(it: int, max_preemptions: int, preemptive: bool = True) -> int:
    if not preemptive:
        return 1
    return min(2**it, max_preemptions + 1)


def _executing(task: TaskSpec) -> list[int]:
    return [n.id for n in task.subtasks if n.wcet > 0]


def exec_predecessors(task: TaskSpec) -> dict[int, list[int]]:
    """Nearest executing ancestors, looking through structural and empty nodes."""
    nodes = task.node_map
    pred = task.pred
    memo: dict[int, frozenset[int]] = {}

    def up(v: int) -> frozenset[int]:
        if v not in memo:
            acc: set[int] = set()
            for p in pred[v]:
                if nodes[p].is_subtask and nodes[p].wcet > 0:
                    acc.add(p)
                else:
                    acc |= up(p)
            memo[v] = frozenset(acc)
        return memo[v]

    return {v: sorted(up(v)) for v in _executing(task)}


def _preemptive_tag(arch: Architecture, tag) -> bool:
    return all(e.preemptive for e in arch.engines_of(tag))


def build_ilp(tasks: Sequence[TaskSpec], arch: Architecture, it: int, method: Method | str = Method.GLOBAL) -> ILPModel:
    method = Method(method)
    if it < 0:
        raise ValueError("iteration must be non-negative")
    for t in tasks:
        bad = [n.id for n in t.nodes if n.kind in BRANCHING]
        if bad:
            raise UnsupportedNodeKind(f"task {t.id}: branching nodes {bad}")
        for n in t.subtasks:
            if not arch.engines_of(n.tag):
                raise UnknownTag(n.tag)
    tasks = sorted(tasks, key=lambda t: t.id)
    hp = hyperperiod(tasks) if tasks else 1
    big_m = hp + max((t.deadline for t in tasks), default=0) + 1
    model = ILPModel(big_m=big_m, method=method, iteration=it, hyperperiod=hp)

    # Variables.
    for t in tasks:
        nodes = t.node_map
        for j in _executing(t):
            n = nodes[j]
            nb = nb_intervals(it, n.max_preemptions, _preemptive_tag(arch, n.tag))
            model.n_intervals[(t.id, j)] = nb
            model.demand[(t.id, j)] = ilp_split_inflation(n.wcet, nb, n.split_cost)
            for k in range(hp // t.period):
                lo, hi = k * t.period, k * t.period + t.deadline
                for l in range(nb):
                    for e in arch.engines_of(n.tag):
                        key = (t.id, j, k, l, e.id)
                        tag = "_".join(map(str, key))
                        s = model.add_var(f"s_{tag}", lo, hi)
                        f = model.add_var(f"f_{tag}", lo, hi)
                        model.intervals[key] = (s, f)
    for s, f in model.intervals.values():
        model.objective[f] = 1
        model.objective[s] = -1

    by_job: dict[tuple[int, int, int], list[IKey]] = {}
    for key in model.intervals:
        by_job.setdefault(key[:3], []).append(key)

    # Interval order and sufficiency.
    for s, f in model.intervals.values():
        model.add_row([(f, 1), (s, -1)], ">=", 0)
    # Intervals of one job on one engine are interchangeable; fixing their
    # order removes symmetric copies of every solution.
    for (i, j, k, l, m), (s, f) in model.intervals.items():
        nxt = model.intervals.get((i, j, k, l + 1, m))
        if nxt is not None:
            model.add_row([(f, 1), (nxt[0], -1)], "<=", 0)
    for job, keys in by_job.items():
        coef = []
        for key in keys:
            s, f = model.intervals[key]
            coef += [(f, 1), (s, -1)]
        model.add_row(coef, ">=", model.demand[job[:2]])

    # Precedence.
    for t in tasks:
        for v, preds in exec_predecessors(t).items():
            for u in preds:
                for k in range(hp // t.period):
                    for ku in by_job[(t.id, u, k)]:
                        for kv in by_job[(t.id, v, k)]:
                            model.add_row([(model.intervals[ku][1], 1), (model.intervals[kv][0], -1)], "<=", 0)

    # Intervals of one job never overlap, whatever the engines.
    for keys in by_job.values():
        for a in range(len(keys)):
            for b in range(a + 1, len(keys)):
                _disjoint(model, keys[a], keys[b])

    # Intervals of different jobs sharing an engine never overlap.
    period = {t.id: t.period for t in tasks}
    deadline = {t.id: t.deadline for t in tasks}
    desc = {t.id: t.descendants for t in tasks}
    by_engine: dict[int, list[IKey]] = {}
    for key in model.intervals:
        by_engine.setdefault(key[4], []).append(key)
    for keys in by_engine.values():
        for a in range(len(keys)):
            ka = keys[a]
            for b in range(a + 1, len(keys)):
                kb = keys[b]
                if ka[:3] == kb[:3]:
                    continue
                lo = max(ka[2] * period[ka[0]], kb[2] * period[kb[0]])
                hi = min(ka[2] * period[ka[0]] + deadline[ka[0]], kb[2] * period[kb[0]] + deadline[kb[0]])
                if lo >= hi:
                    continue
                if ka[0] == kb[0] and ka[2] == kb[2] and (kb[1] in desc[ka[0]][ka[1]] or ka[1] in desc[ka[0]][kb[1]]):
                    continue  # already ordered by precedence
                _disjoint(model, ka, kb)

    if method is Method.PARTITIONED:
        for t in tasks:
            nodes = t.node_map
            for j in _executing(t):
                sel = {}
                for e in arch.engines_of(nodes[j].tag):
                    sel[e.id] = (model.add_var(f"a_{t.id}_{j}_{e.id}", 0, 1, True), [])
                for key, (s, f) in model.intervals.items():
                    if key[:2] == (t.id, j):
                        a, governed = sel[key[4]]
                        governed.append((s, f))
                        model.add_row([(f, 1), (a, -big_m), (s, -1)], "<=", 0)
                        model.add_row([(f, 1), (a, -big_m), (s, -1)], ">=", -big_m)
                model.add_row([(a, 1) for a, _ in sel.values()], "=", 1)
                model.partitions.append(sel)
    return model


def _disjoint(model: ILPModel, a: IKey, b: IKey) -> None:
    sa, fa = model.intervals[a]
    sb, fb = model.intervals[b]
    model.add_disjunction(fa, sb, fb, sa)


# ------------------------------------------------------------------ LP export


def _num(v: Number) -> str:
    v = Fraction(v)
    if v.denominator == 1:
        return str(v.numerator)
    return repr(float(v))


def _expr(model: ILPModel, coef: Iterable[tuple[int, Number]]) -> str:
    parts = []
    for j, a in coef:
        sign = "-" if a < 0 else "+"
        mag = abs(a)
        parts.append(f"{sign} {model.vars[j].name}" if mag == 1 else f"{sign} {_num(mag)} {model.vars[j].name}")
    return " ".join(parts) if parts else "0"


def to_lp(model: ILPModel) -> str:
    """CPLEX LP text; identical models give identical bytes."""
    out = ["Maximize", f" obj: {_expr(model, sorted(model.objective.items()))}", "Subject To"]
    for k, r in enumerate(model.rows):
        out.append(f" c{k}: {_expr(model, r.coef)} {r.sense} {_num(r.rhs)}")
    out.append("Bounds")
    for v in model.vars:
        if v.binary:
            continue
        hi = "+inf" if v.hi is None else _num(v.hi)
        out.append(f" {_num(v.lo)} <= {v.name} <= {hi}")
    bins = [v.name for v in model.vars if v.binary]
    if bins:
        out.append("Binaries")
        out.extend(f" {name}" for name in bins)
    out.append("End")
    return "\n".join(out) + "\n"


__all__ = [
    "ILPModel",
    "Method",
    "Row",
    "UnsupportedNodeKind",
    "Var",
    "build_ilp",
    "exec_predecessors",
    "linearize_disjunction",
    "nb_intervals",
    "to_lp",
]
