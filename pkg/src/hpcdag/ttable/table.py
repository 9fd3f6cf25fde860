"""Schedule tables, their construction by interval deepening, and a validator."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

from ..model import Architecture, TaskSpec, hyperperiod
from ..timing import ilp_split_inflation
from .model import ILPModel, Method, build_ilp, exec_predecessors, nb_intervals
from .solve import BINARY_CAP, SOLVERS, Budget, Solution, TooManyBinaries


@dataclass(frozen=True, order=True)
class Reservation:
    start: Fraction
    finish: Fraction
    task: int
    node: int
    job: int


@dataclass
class TimeTable:
    hyperperiod: int
    engines: dict[int, list[Reservation]] = field(default_factory=dict)
    demand: dict[tuple[int, int], int] = field(default_factory=dict)
    method: Method = Method.GLOBAL
    iteration: int = 0

    def add(self, engine: int, r: Reservation) -> None:
        self.engines.setdefault(engine, []).append(r)
        self.engines[engine].sort()

    def reservations(self):
        for e in sorted(self.engines):
            for r in self.engines[e]:
                yield e, r


def extract_table(model: ILPModel, x: Sequence[Fraction]) -> TimeTable:
    table = TimeTable(model.hyperperiod, demand=dict(model.demand), method=model.method, iteration=model.iteration)
    for (i, j, k, _l, m), (s, f) in sorted(model.intervals.items()):
        if x[f] > x[s]:
            table.engines.setdefault(m, []).append(Reservation(Fraction(x[s]), Fraction(x[f]), i, j, k))
    for lst in table.engines.values():
        lst.sort()
    return table


@dataclass
class TTResult:
    success: bool
    table: TimeTable | None = None
    reason: str = ""
    attempts: list[tuple[int, str]] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.success


def _saturation(tasks: Sequence[TaskSpec], arch: Architecture) -> int:
    """Smallest iteration at which no job can get more intervals."""
    need = 1
    for t in tasks:
        for n in t.subtasks:
            if n.wcet > 0 and all(e.preemptive for e in arch.engines_of(n.tag)):
                need = max(need, n.max_preemptions + 1)
    it = 0
    while 2**it < need:
        it += 1
    return it


def construct_timetable(
    tasks: Sequence[TaskSpec],
    arch: Architecture,
    method: Method | str = Method.GLOBAL,
    max_it: int = 4,
    solver: str | Callable[[ILPModel, Budget], Solution] = "builtin",
    budget: Budget | float | None = None,
    cap: int = BINARY_CAP,
) -> TTResult:
    """Deepen the interval count until a model is feasible.

    Stops at the first feasible iteration, after ``max_it``, or once every
    preemptive sub-task already has its maximum number of intervals.
    """
    solve = SOLVERS[solver] if isinstance(solver, str) else solver
    last = min(max_it, _saturation(tasks, arch))
    attempts: list[tuple[int, str]] = []
    for it in range(last + 1):
        model = build_ilp(tasks, arch, it, method)
        if model.n_binaries > cap:
            attempts.append((it, "too large"))
            return TTResult(False, None, f"{model.n_binaries} binaries exceed the cap of {cap}", attempts)
        try:
            sol = solve(model, budget) if solve is not SOLVERS["builtin"] else solve(model, budget, cap)
        except TooManyBinaries as exc:
            return TTResult(False, None, str(exc), attempts)
        attempts.append((it, sol.status))
        if sol.status == "timeout":
            return TTResult(False, None, f"solver timeout at iteration {it}", attempts)
        if sol.feasible:
            return TTResult(True, extract_table(model, sol.x), "", attempts)
    return TTResult(False, None, f"infeasible up to iteration {last}", attempts)


# ------------------------------------------------------------------ validation


@dataclass(frozen=True)
class Violation:
    kind: str  # EngineOverlap, JobOverlap, NotPartitioned, Precedence, Sufficiency, Window, TagMismatch, UnknownEngine
    detail: str

    def __str__(self) -> str:
        return f"{self.kind}: {self.detail}"


def default_demand(tasks: Sequence[TaskSpec], arch: Architecture, it: int = 0) -> dict[tuple[int, int], int]:
    out = {}
    for t in tasks:
        for n in t.subtasks:
            if n.wcet > 0:
                pre = all(e.preemptive for e in arch.engines_of(n.tag))
                out[(t.id, n.id)] = ilp_split_inflation(n.wcet, nb_intervals(it, n.max_preemptions, pre), n.split_cost)
    return out


def validate_timetable(
    table: TimeTable, tasks: Sequence[TaskSpec], arch: Architecture, method: Method | str | None = None
) -> list[Violation]:
    """All violations, most basic first; an empty list means the table is clean."""
    method = Method(method) if method is not None else table.method
    out: list[Violation] = []
    specs = {t.id: t for t in tasks}
    demand = table.demand or default_demand(tasks, arch, table.iteration)
    jobs: dict[tuple[int, int, int], list[tuple[int, Reservation]]] = {}
    for e, r in table.reservations():
        try:
            engine = arch.engine(e)
        except KeyError:
            out.append(Violation("UnknownEngine", f"engine {e}"))
            continue
        t = specs.get(r.task)
        node = t.node_map.get(r.node) if t else None
        if node is None or not node.is_subtask:
            out.append(Violation("TagMismatch", f"task {r.task} node {r.node} is not a sub-task"))
            continue
        if node.tag != engine.tag:
            out.append(Violation("TagMismatch", f"task {r.task} node {r.node} ({node.tag}) on {engine.tag} engine {e}"))
        lo, hi = r.job * t.period, r.job * t.period + t.deadline
        if r.start >= r.finish or r.start < lo or r.finish > hi or r.job >= table.hyperperiod // t.period:
            out.append(Violation("Window", f"task {r.task} node {r.node} job {r.job} [{r.start}, {r.finish}) outside [{lo}, {hi}]"))
        jobs.setdefault((r.task, r.node, r.job), []).append((e, r))

    for e in sorted(table.engines):
        res = sorted(table.engines[e])
        for a, b in zip(res, res[1:]):
            if b.start < a.finish:
                out.append(Violation("EngineOverlap", f"engine {e}: {_fmt(a)} and {_fmt(b)}"))
    for key, lst in sorted(jobs.items()):
        lst = sorted(lst, key=lambda p: p[1])
        for (_, a), (_, b) in zip(lst, lst[1:]):
            if b.start < a.finish:
                out.append(Violation("JobOverlap", f"task {key[0]} node {key[1]} job {key[2]}"))

    if method is Method.PARTITIONED:
        homes: dict[tuple[int, int], set[int]] = {}
        for (i, j, _k), lst in jobs.items():
            homes.setdefault((i, j), set()).update(e for e, _ in lst)
        for (i, j), es in sorted(homes.items()):
            if len(es) > 1:
                out.append(Violation("NotPartitioned", f"task {i} node {j} on engines {sorted(es)}"))

    hp = table.hyperperiod
    for t in sorted(tasks, key=lambda t: t.id):
        preds = exec_predecessors(t)
        for k in range(hp // t.period):
            for v in sorted(preds):
                got = sum((r.finish - r.start for _, r in jobs.get((t.id, v, k), [])), Fraction(0))
                need = demand.get((t.id, v), 0)
                if got < need:
                    out.append(Violation("Sufficiency", f"task {t.id} node {v} job {k}: {got} < {need}"))
                vs = jobs.get((t.id, v, k))
                if not vs:
                    continue
                first = min(r.start for _, r in vs)
                for u in preds[v]:
                    us = jobs.get((t.id, u, k))
                    if us and max(r.finish for _, r in us) > first:
                        out.append(Violation("Precedence", f"task {t.id} job {k}: node {u} ends after node {v} starts"))
    return out


def _fmt(r: Reservation) -> str:
    return f"({r.task},{r.node},{r.job})[{r.start},{r.finish})"


__all__ = [
    "Reservation",
    "TTResult",
    "TimeTable",
    "Violation",
    "construct_timetable",
    "default_demand",
    "extract_table",
    "validate_timetable",
]
