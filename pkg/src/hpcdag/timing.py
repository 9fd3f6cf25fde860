"""Intermediate offsets/deadlines, sequential subsets and WCET inflation."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

from .model import Engine, TaskSpec, hop_counts, longest_paths

if TYPE_CHECKING:
    from .alloc import Allocation


class SlackMode(str, enum.Enum):
    FAIR = "F"
    PROPORTIONAL = "P"


class PreemptionScheme(str, enum.Enum):
    MAX_PREEMP = "MAX_PREEMP"
    REDUCED_PREM = "REDUCED_PREM"


class CostBasis(str, enum.Enum):
    """Whose WCET the engine's preemption ratio is applied to."""

    PREEMPTED = "preempted"
    PREEMPTING = "preempting"


class CriticalPathExceedsDeadline(ValueError):
    def __init__(self, critical: int, deadline: int):
        super().__init__(f"critical path {critical} exceeds deadline {deadline}")
        self.critical = critical
        self.deadline = deadline


@dataclass(frozen=True)
class WindowAssignment:
    """Per sub-task offset and local deadline, relative to job release."""

    offset: Mapping[int, int]
    deadline: Mapping[int, int]

    def window(self, node: int) -> tuple[int, int]:
        return self.offset[node], self.deadline[node]

    def violations(self, task: TaskSpec) -> list[str]:
        out = []
        nm = task.node_map
        subs = {n.id for n in task.subtasks}
        for v in subs:
            o, d = self.offset[v], self.deadline[v]
            if o < 0 or d - o < nm[v].wcet:
                out.append(f"window of {v} [{o},{d}] too small")
            if d > task.deadline:
                out.append(f"deadline of {v} beyond task deadline")
        # Precedence through structural nodes counts too.
        for u in subs:
            for v in task.descendants[u] & subs:
                if self.offset[v] < self.deadline[u]:
                    out.append(f"offset of {v} precedes deadline of {u}")
        return out


def assign_windows(concrete: TaskSpec, slack_mode: SlackMode | str) -> WindowAssignment:
    mode = SlackMode(slack_mode)
    paths = longest_paths(concrete)
    crit, dl = paths.critical, concrete.deadline
    if crit > dl:
        raise CriticalPathExceedsDeadline(crit, dl)
    e = paths.earliest
    nm = concrete.node_map
    off: dict[int, int] = {}
    ddl: dict[int, int] = {}
    if mode is SlackMode.PROPORTIONAL:
        for v in (n.id for n in concrete.subtasks):
            c = nm[v].wcet
            if crit == 0:
                off[v], ddl[v] = 0, dl
                continue
            ddl[v] = (e[v] * dl) // crit
            off[v] = ((e[v] - c) * dl) // crit
    else:
        hops = hop_counts(concrete)
        depth = max(hops.values(), default=0)
        slack = dl - crit
        for v in (n.id for n in concrete.subtasks):
            c = nm[v].wcet
            h = hops[v]
            # floor(h * S / H) without floating point
            ddl[v] = e[v] + (h * slack) // depth
            off[v] = e[v] - c + ((h - 1) * slack) // depth
    # Offsets never start before a predecessor's local deadline.
    for v in concrete.topo_order:
        if v not in off:
            continue
        prior = [ddl[u] for u in _subtask_ancestors(concrete, v)]
        if prior:
            off[v] = max(off[v], max(prior))
    return WindowAssignment(off, ddl)


def _subtask_ancestors(task: TaskSpec, v: int) -> list[int]:
    # Nearest sub-task predecessors, looking through structural nodes.
    nm = task.node_map
    out, todo, seen = [], list(task.pred[v]), set()
    while todo:
        u = todo.pop()
        if u in seen:
            continue
        seen.add(u)
        if nm[u].is_subtask:
            out.append(u)
        else:
            todo.extend(task.pred[u])
    return out


def maximal_sequential_subsets(concrete: TaskSpec, engine_nodes: Iterable[int]) -> list[tuple[int, ...]]:
    """Greedy chain decomposition: longest chain first, smallest ids on ties."""
    remaining = set(engine_nodes)
    pos = {n: i for i, n in enumerate(concrete.topo_order)}
    desc = concrete.descendants
    chains: list[tuple[int, ...]] = []
    while remaining:
        nodes = sorted(remaining, key=pos.__getitem__)
        best: dict[int, tuple[int, ...]] = {}
        for v in reversed(nodes):
            tail: tuple[int, ...] = ()
            for w in desc[v]:
                if w in remaining and _better(best[w], tail):
                    tail = best[w]
            best[v] = (v,) + tail
        top: tuple[int, ...] = ()
        for v in nodes:
            if _better(best[v], top):
                top = best[v]
        chains.append(top)
        remaining -= set(top)
    return chains


def _better(a: tuple[int, ...], b: tuple[int, ...]) -> bool:
    if len(a) != len(b):
        return len(a) > len(b)
    return a < b


def preemption_cost(engine: Engine, wcet: int) -> int:
    return math.ceil(engine.preempt_cost_ratio * wcet)


@dataclass(frozen=True)
class PlacedNode:
    task: int
    node: int
    wcet: int
    window: int | None = None  # d - o; None means unknown (may preempt anything)


def engine_charges(
    engine: Engine,
    placed: Sequence[PlacedNode],
    graphs: Mapping[int, TaskSpec],
    scheme: PreemptionScheme | str,
    basis: CostBasis | str = CostBasis.PREEMPTED,
) -> dict[tuple[int, int], int]:
    """Extra execution time charged to each node placed on one engine.

    A node pays for preempting foreign work. With the ``preempted`` basis
    it pays the largest cost among the foreign nodes it can preempt; with
    ``preempting`` it pays the ratio applied to its own WCET, if it can
    preempt anything at all. Under EDF a job only preempts jobs of strictly
    longer relative window, so those are the candidates when windows are
    known. Zero-WCET nodes never run and non-preemptive engines never
    preempt, so neither causes a charge. ``graphs`` maps task key to the
    concrete graph.
    """
    scheme = PreemptionScheme(scheme)
    basis = CostBasis(basis)
    out = {(p.task, p.node): 0 for p in placed}
    live = [p for p in placed if p.wcet > 0]
    if not live or not engine.preemptive or engine.preempt_cost_ratio == 0:
        return out
    victim = {id(p): _foreign_max(p, live, engine, basis) for p in live}

    if scheme is PreemptionScheme.MAX_PREEMP:
        for p in live:
            out[(p.task, p.node)] = victim[id(p)]
        return out
    by_task: dict[int, list[PlacedNode]] = {}
    for p in live:
        by_task.setdefault(p.task, []).append(p)
    for task, nodes in by_task.items():
        if not any(victim[id(p)] for p in nodes):
            continue
        # One charge per chain, paid by its first member with the largest cost.
        cost = {p.node: victim[id(p)] for p in nodes}
        for chain in maximal_sequential_subsets(graphs[task], cost):
            worst = max(cost[v] for v in chain)
            payer = next(v for v in chain if cost[v] == worst)
            out[(task, payer)] = worst
    return out


def _foreign_max(p: PlacedNode, live: Sequence[PlacedNode], engine: Engine, basis: CostBasis) -> int:
    best = 0
    for u in live:
        if u.task == p.task:
            continue
        if p.window is not None and u.window is not None and u.window <= p.window:
            continue
        if basis is CostBasis.PREEMPTING:
            return preemption_cost(engine, p.wcet)
        best = max(best, preemption_cost(engine, u.wcet))
    return best


def inflate_wcets(alloc: "Allocation", scheme: PreemptionScheme | str) -> "Allocation":
    return alloc.reinflated(scheme)


def ilp_split_inflation(wcet: int, nb_intervals: int, split_cost: int) -> int:
    if nb_intervals < 1:
        raise ValueError("at least one interval")
    return wcet + nb_intervals * split_cost


def fractional_windows(concrete: TaskSpec, mode: SlackMode | str) -> dict[int, tuple[Fraction, Fraction]]:
    """Unrounded (offset, deadline) pairs; used to check scaling properties."""
    mode = SlackMode(mode)
    paths = longest_paths(concrete)
    crit, dl = paths.critical, concrete.deadline
    e = paths.earliest
    nm = concrete.node_map
    out = {}
    if mode is SlackMode.PROPORTIONAL:
        for n in concrete.subtasks:
            if crit == 0:
                out[n.id] = (Fraction(0), Fraction(dl))
                continue
            k = Fraction(dl, crit)
            out[n.id] = ((e[n.id] - nm[n.id].wcet) * k, e[n.id] * k)
    else:
        hops = hop_counts(concrete)
        depth = max(hops.values(), default=0)
        q = Fraction(dl - crit, depth) if depth else Fraction(0)
        for n in concrete.subtasks:
            h = hops[n.id]
            out[n.id] = (e[n.id] - n.wcet + (h - 1) * q, e[n.id] + h * q)
    return out


__all__ = [
    "CostBasis",
    "CriticalPathExceedsDeadline",
    "PlacedNode",
    "PreemptionScheme",
    "SlackMode",
    "WindowAssignment",
    "assign_windows",
    "engine_charges",
    "fractional_windows",
    "ilp_split_inflation",
    "inflate_wcets",
    "maximal_sequential_subsets",
    "preemption_cost",
]

