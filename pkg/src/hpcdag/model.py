"""Architectures and HPC-DAG task graphs.

Time is integral everywhere. A task graph carries four node kinds:
sub-tasks (the only nodes that execute), alternative nodes (design-time
choice), conditional nodes (run-time choice) and junctions that close an
alternative/conditional region.
"""

from __future__ import annotations

import enum
import heapq
import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, reduce
from typing import Iterable, Mapping, Sequence

Tag = str


class NodeKind(str, enum.Enum):
    SUBTASK = "SubTask"
    ALTERNATIVE = "Alternative"
    CONDITIONAL = "Conditional"
    JUNCTION = "Junction"


BRANCHING = (NodeKind.ALTERNATIVE, NodeKind.CONDITIONAL)


class CyclicGraph(ValueError):
    pass


class RegionMalformed(ValueError):
    pass


@dataclass(frozen=True)
class Engine:
    id: int
    tag: Tag
    preemptive: bool = True
    preempt_cost_ratio: Fraction = Fraction(0)

    def __post_init__(self):
        if not self.tag:
            raise ValueError("engine tag must be non-empty")
        ratio = Fraction(self.preempt_cost_ratio)
        if not 0 <= ratio <= 1:
            raise ValueError(f"preempt_cost_ratio {ratio} outside [0, 1]")
        object.__setattr__(self, "preempt_cost_ratio", ratio)


@dataclass(frozen=True)
class Architecture:
    engines: tuple[Engine, ...]

    def __post_init__(self):
        object.__setattr__(self, "engines", tuple(self.engines))
        if not self.engines:
            raise ValueError("architecture needs at least one engine")
        ids = [e.id for e in self.engines]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate engine ids")

    @cached_property
    def tags(self) -> tuple[Tag, ...]:
        seen: dict[Tag, None] = {}
        for e in self.engines:
            seen.setdefault(e.tag)
        return tuple(seen)

    def engines_of(self, tag: Tag) -> tuple[Engine, ...]:
        return tuple(e for e in self.engines if e.tag == tag)

    def count(self, tag: Tag) -> int:
        return sum(1 for e in self.engines if e.tag == tag)

    def engine(self, engine_id: int) -> Engine:
        for e in self.engines:
            if e.id == engine_id:
                return e
        raise KeyError(engine_id)


@dataclass(frozen=True)
class Node:
    id: int
    kind: NodeKind = NodeKind.SUBTASK
    tag: Tag | None = None
    wcet: int = 0
    max_preemptions: int = 0
    split_cost: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", NodeKind(self.kind))
        if self.wcet < 0 or self.max_preemptions < 0 or self.split_cost < 0:
            raise ValueError(f"node {self.id}: negative timing parameter")
        if self.kind is NodeKind.SUBTASK and not self.tag:
            raise ValueError(f"sub-task {self.id} has no tag")

    @property
    def is_subtask(self) -> bool:
        return self.kind is NodeKind.SUBTASK

    @property
    def demand(self) -> int:
        """WCET if the node executes, 0 for structural nodes."""
        return self.wcet if self.kind is NodeKind.SUBTASK else 0


@dataclass(frozen=True)
class Region:
    """An alternative/conditional block: head, matching junction, branches.

    ``branches`` holds one frozenset of interior node ids per outgoing edge of
    the head, in ascending successor-id order; an empty set is a direct
    head -> junction edge.
    """

    head: int
    junction: int
    successors: tuple[int, ...]
    branches: tuple[frozenset[int], ...]

    @property
    def interior(self) -> frozenset[int]:
        return frozenset().union(*self.branches)


@dataclass(frozen=True)
class TaskSpec:
    id: int
    period: int
    deadline: int
    nodes: tuple[Node, ...]
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(tuple(e) for e in self.edges))
        if self.period <= 0 or self.deadline <= 0:
            raise ValueError(f"task {self.id}: period and deadline must be positive")

    @cached_property
    def node_map(self) -> dict[int, Node]:
        return {n.id: n for n in self.nodes}

    @cached_property
    def succ(self) -> dict[int, tuple[int, ...]]:
        out: dict[int, list[int]] = {n.id: [] for n in self.nodes}
        for u, v in self.edges:
            out[u].append(v)
        return {k: tuple(sorted(v)) for k, v in out.items()}

    @cached_property
    def pred(self) -> dict[int, tuple[int, ...]]:
        inc: dict[int, list[int]] = {n.id: [] for n in self.nodes}
        for u, v in self.edges:
            inc[v].append(u)
        return {k: tuple(sorted(v)) for k, v in inc.items()}

    @cached_property
    def topo_order(self) -> tuple[int, ...]:
        """Kahn order with smallest-id-first tie-break; raises on cycles."""
        indeg = {n: len(p) for n, p in self.pred.items()}
        ready = sorted(n for n, d in indeg.items() if d == 0)
        order: list[int] = []
        heapq.heapify(ready)
        while ready:
            n = heapq.heappop(ready)
            order.append(n)
            for m in self.succ[n]:
                indeg[m] -= 1
                if indeg[m] == 0:
                    heapq.heappush(ready, m)
        if len(order) != len(self.nodes):
            raise CyclicGraph(f"task {self.id} contains a directed cycle")
        return tuple(order)

    @cached_property
    def subtasks(self) -> tuple[Node, ...]:
        return tuple(n for n in self.nodes if n.is_subtask)

    @cached_property
    def descendants(self) -> dict[int, frozenset[int]]:
        desc: dict[int, frozenset[int]] = {}
        for n in reversed(self.topo_order):
            acc: set[int] = set()
            for m in self.succ[n]:
                acc.add(m)
                acc |= desc[m]
            desc[n] = frozenset(acc)
        return desc

    def comparable(self, u: int, v: int) -> bool:
        return u == v or v in self.descendants[u] or u in self.descendants[v]

    @cached_property
    def regions(self) -> dict[int, Region]:
        """Regions keyed by head id. Raises RegionMalformed."""
        return {r.head: r for r in _find_regions(self)}

    def utilization(self) -> Fraction:
        return Fraction(sum(n.demand for n in self.nodes), self.period)


@dataclass(frozen=True)
class ConcreteTask(TaskSpec):
    """A task with every alternative resolved.

    ``choices`` records, per alternative node id of the originating spec
    (ascending), the index of the selected outgoing edge; unreachable nested
    alternatives are absent.
    """

    spec_id: int = -1
    choices: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        super().__post_init__()
        if any(n.kind is NodeKind.ALTERNATIVE for n in self.nodes):
            raise ValueError("concrete task still contains alternative nodes")
        if self.spec_id == -1:
            object.__setattr__(self, "spec_id", self.id)


@dataclass(frozen=True)
class TaggedTask:
    parent: ConcreteTask
    tag: Tag
    nodes: tuple[int, ...]

    def utilization(self) -> Fraction:
        nm = self.parent.node_map
        return Fraction(sum(nm[n].wcet for n in self.nodes), self.parent.period)


# ---------------------------------------------------------------- validation


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


def validate_spec(spec: TaskSpec) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    ids = [n.id for n in spec.nodes]
    if not ids:
        return [Diagnostic("Empty", "task has no nodes")]
    if len(set(ids)) != len(ids):
        diags.append(Diagnostic("DuplicateNode", "node ids are not unique"))
        return diags
    known = set(ids)
    for u, v in spec.edges:
        if u not in known or v not in known:
            diags.append(Diagnostic("DanglingEdge", f"edge ({u},{v}) references unknown node"))
    if diags:
        return diags
    if len(set(spec.edges)) != len(spec.edges):
        diags.append(Diagnostic("DuplicateEdge", "edge listed twice"))
    if spec.deadline > spec.period:
        diags.append(Diagnostic("DeadlineExceedsPeriod", f"D={spec.deadline} > T={spec.period}"))
    acyclic = True
    try:
        spec.topo_order
    except CyclicGraph:
        acyclic = False
        diags.append(Diagnostic("Cycle", "graph contains a directed cycle"))
    if not is_weakly_connected(ids, spec.edges):
        diags.append(Diagnostic("NotWeaklyConnected", "undirected graph is disconnected"))
    for n in spec.nodes:
        if n.kind in BRANCHING:
            deg = len(spec.succ[n.id])
            if deg == 0:
                diags.append(Diagnostic("BranchSink", f"{n.kind.value} node {n.id} is a sink"))
            elif deg < 2:
                diags.append(Diagnostic("AltOutDegree", f"{n.kind.value} node {n.id} has {deg} outgoing edge"))
    if acyclic and not any(d.code in ("BranchSink", "AltOutDegree") for d in diags):
        try:
            _find_regions(spec)
        except RegionMalformed as exc:
            diags.append(Diagnostic("RegionMalformed", str(exc)))
    return diags


def is_weakly_connected(ids: Sequence[int], edges: Iterable[tuple[int, int]]) -> bool:
    if not ids:
        return True
    adj: dict[int, list[int]] = {i: [] for i in ids}
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    seen = {ids[0]}
    todo = deque([ids[0]])
    while todo:
        for m in adj[todo.popleft()]:
            if m not in seen:
                seen.add(m)
                todo.append(m)
    return len(seen) == len(adj)


def _postdominators(spec: TaskSpec) -> dict[int, frozenset[int]]:
    # Virtual exit joins every sink; plain iterative data-flow on reverse topo.
    pdom: dict[int, frozenset[int]] = {}
    for n in reversed(spec.topo_order):
        succ = spec.succ[n]
        if not succ:
            pdom[n] = frozenset([n])
        else:
            pdom[n] = frozenset.intersection(*(pdom[m] for m in succ)) | {n}
    return pdom


def _find_regions(spec: TaskSpec) -> list[Region]:
    order = spec.topo_order
    pos = {n: i for i, n in enumerate(order)}
    pdom = _postdominators(spec)
    nm = spec.node_map
    regions: list[Region] = []
    claimed: dict[int, int] = {}
    for h in order:
        if nm[h].kind not in BRANCHING:
            continue
        cands = pdom[h] - {h}
        if not cands:
            raise RegionMalformed(f"branch node {h} has no matching junction")
        j = min(cands, key=pos.__getitem__)
        if nm[j].kind is not NodeKind.JUNCTION:
            raise RegionMalformed(f"branch node {h} closes at node {j}, which is not a junction")
        if j in claimed:
            raise RegionMalformed(f"junction {j} closes both {claimed[j]} and {h}")
        claimed[j] = h
        branches = []
        for s in spec.succ[h]:
            if s == j:
                branches.append(frozenset())
                continue
            body: set[int] = set()
            todo = [s]
            while todo:
                n = todo.pop()
                if n in body or n == j:
                    continue
                body.add(n)
                todo.extend(spec.succ[n])
            branches.append(frozenset(body))
        for a in range(len(branches)):
            for b in range(a + 1, len(branches)):
                if branches[a] & branches[b]:
                    raise RegionMalformed(f"branches of node {h} share nodes")
        interior = frozenset().union(*branches)
        for n in interior:
            for p in spec.pred[n]:
                if p != h and p not in interior:
                    raise RegionMalformed(f"edge ({p},{n}) enters the region of {h} from outside")
        for b in branches:
            for n in b:
                for p in spec.pred[n]:
                    if p != h and p not in b:
                        raise RegionMalformed(f"edge ({p},{n}) crosses branches of {h}")
        regions.append(Region(h, j, spec.succ[h], tuple(branches)))
    # A junction left behind by a resolved alternative closes nothing; allowed.
    return regions


# ------------------------------------------------------------ graph metrics


@dataclass(frozen=True)
class PathLengths:
    earliest: dict[int, int]  # e(v): heaviest source->v path, inclusive
    remaining: dict[int, int]  # l(v): heaviest v->sink path, inclusive
    critical: int

    def on_critical_path(self, task: TaskSpec) -> frozenset[int]:
        return frozenset(
            n.id for n in task.nodes if self.earliest[n.id] + self.remaining[n.id] - n.demand == self.critical
        )


def longest_paths(task: TaskSpec) -> PathLengths:
    order = task.topo_order
    nm = task.node_map
    e: dict[int, int] = {}
    for n in order:
        e[n] = nm[n].demand + max((e[p] for p in task.pred[n]), default=0)
    l: dict[int, int] = {}
    for n in reversed(order):
        l[n] = nm[n].demand + max((l[s] for s in task.succ[n]), default=0)
    crit = max(e.values(), default=0)
    return PathLengths(e, l, crit)


def hop_counts(task: TaskSpec) -> dict[int, int]:
    """Max number of sub-task nodes on a source->v path, v inclusive."""
    nm = task.node_map
    h: dict[int, int] = {}
    for n in task.topo_order:
        h[n] = int(nm[n].is_subtask) + max((h[p] for p in task.pred[n]), default=0)
    return h


def hyperperiod(tasks: Iterable[TaskSpec | int]) -> int:
    periods = [t if isinstance(t, int) else t.period for t in tasks]
    if any(p <= 0 for p in periods):
        raise ValueError("periods must be positive")
    return reduce(math.lcm, periods, 1)


def reversed_task(task: TaskSpec) -> TaskSpec:
    return TaskSpec(task.id, task.period, task.deadline, task.nodes, tuple((v, u) for u, v in task.edges))


def tag_counts(arch: Architecture) -> Mapping[Tag, int]:
    return {t: arch.count(t) for t in arch.tags}
