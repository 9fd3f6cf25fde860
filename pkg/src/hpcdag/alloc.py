"""Partitioned allocation of HPC-DAG task sets onto tagged engines.

The driver walks the task list, tries every concrete task of a spec on a
single engine per tag, and otherwise spreads one concrete over several
engines, omitting sub-tasks one at a time until each engine passes the
demand test.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .analysis import EngineWorkload, Item, Verdict, analyze_engine_conditional
from .expand import OrderRelation, conditional_scenarios, enumerate_concretes, filter_tagged, sort_concretes
from .model import Architecture, ConcreteTask, Engine, TaggedTask, TaskSpec, Tag, longest_paths
from .timing import (
    CostBasis,
    CriticalPathExceedsDeadline,
    PlacedNode,
    PreemptionScheme,
    SlackMode,
    WindowAssignment,
    assign_windows,
    engine_charges,
)

MAX_REQUEUES = 3


class EmptyTaggedTask(ValueError):
    pass


@dataclass(frozen=True)
class AllocParams:
    order: OrderRelation = OrderRelation.R
    slack_mode: SlackMode = SlackMode.FAIR
    fit: str = "BF"
    omit: str = "parallel"
    scheme: PreemptionScheme = PreemptionScheme.REDUCED_PREM
    seed: int = 0
    cost_basis: CostBasis = CostBasis.PREEMPTED

    def __post_init__(self):
        object.__setattr__(self, "order", OrderRelation(self.order))
        object.__setattr__(self, "slack_mode", SlackMode(self.slack_mode))
        object.__setattr__(self, "scheme", PreemptionScheme(self.scheme))
        object.__setattr__(self, "cost_basis", CostBasis(self.cost_basis))
        if self.fit not in ("BF", "WF"):
            raise ValueError(f"fit must be BF or WF, got {self.fit!r}")
        if self.omit not in ("parallel", "random"):
            raise ValueError(f"omit must be parallel or random, got {self.omit!r}")

    @classmethod
    def from_name(cls, name: str, **kw) -> "AllocParams":
        """Parse names like ``BRF-P``: fit, order, slack, then omission."""
        head, _, tail = name.strip().upper().partition("-")
        if len(head) != 3 or head[0] not in "BW" or head[1] not in "OR" or head[2] not in "FP" or tail not in ("P", "R"):
            raise ValueError(f"bad heuristic name {name!r}")
        return cls(
            order=OrderRelation(head[1]),
            slack_mode=SlackMode(head[2]),
            fit=head[0] + "F",
            omit="parallel" if tail == "P" else "random",
            **kw,
        )

    @property
    def name(self) -> str:
        return f"{self.fit[0]}{self.order.value}{self.slack_mode.value}-{'P' if self.omit == 'parallel' else 'R'}"


@dataclass(frozen=True)
class Placement:
    task: int
    node: int
    wcet: int
    offset: int
    deadline: int
    period: int
    inflated: int = -1

    @property
    def effective(self) -> int:
        return self.wcet if self.inflated < 0 else self.inflated


@dataclass
class Allocation:
    arch: Architecture
    scheme: PreemptionScheme
    engines: dict[int, list[Placement]] = field(default_factory=dict)
    graphs: dict[int, ConcreteTask] = field(default_factory=dict)
    unallocated: list[tuple[int, int]] = field(default_factory=list)
    basis: CostBasis = CostBasis.PREEMPTED

    def placements(self) -> Iterable[tuple[int, Placement]]:
        for eid in sorted(self.engines):
            for p in self.engines[eid]:
                yield eid, p

    def engine_of(self) -> dict[tuple[int, int], int]:
        return {(p.task, p.node): eid for eid, p in self.placements()}

    def utilization(self, engine_id: int) -> Fraction:
        return sum((Fraction(p.effective, p.period) for p in self.engines.get(engine_id, ())), Fraction(0))

    def reinflated(self, scheme: PreemptionScheme | str) -> "Allocation":
        scheme = PreemptionScheme(scheme)
        out = Allocation(self.arch, scheme, {}, dict(self.graphs), list(self.unallocated), self.basis)
        for eid, plist in self.engines.items():
            out.engines[eid] = _inflate(self.arch.engine(eid), plist, self.graphs, scheme, self.basis)
        return out

    def workload(self, engine_id: int) -> EngineWorkload:
        return _workload(self.arch.engine(engine_id), self.engines.get(engine_id, []))

    def active_engines(self, tag: Tag) -> list[int]:
        return [
            e.id for e in self.arch.engines_of(tag) if any(p.wcet > 0 for p in self.engines.get(e.id, ()))
        ]


@dataclass
class AllocResult:
    success: bool
    allocation: Allocation
    reason: str = ""
    failed_task: int | None = None

    def __bool__(self) -> bool:
        return self.success


def _inflate(engine: Engine, plist: Sequence[Placement], graphs, scheme, basis=CostBasis.PREEMPTED) -> list[Placement]:
    placed = [PlacedNode(p.task, p.node, p.wcet, p.deadline - p.offset) for p in plist]
    charges = engine_charges(engine, placed, graphs, scheme, basis)
    return [replace(p, inflated=p.wcet + charges[(p.task, p.node)]) for p in plist]


def _workload(engine: Engine, plist: Sequence[Placement]) -> EngineWorkload:
    items = [Item(p.task, p.node, p.effective, p.offset, p.deadline, p.period) for p in plist if p.wcet > 0]
    return EngineWorkload(engine, tuple(sorted(items)))


class _State:
    """Tentative engine contents plus a cache of engine verdicts."""

    def __init__(self, arch: Architecture, scheme: PreemptionScheme, basis: CostBasis, graphs, scenarios, cache):
        self.arch = arch
        self.scheme = scheme
        self.basis = basis
        self.engines: dict[int, list[Placement]] = {e.id: [] for e in arch.engines}
        self.graphs = graphs
        self.scenarios = scenarios
        self.cache = cache

    def copy(self) -> "_State":
        s = _State(self.arch, self.scheme, self.basis, self.graphs, self.scenarios, self.cache)
        s.engines = {k: list(v) for k, v in self.engines.items()}
        return s

    def utilization(self, engine_id: int) -> Fraction:
        engine = self.arch.engine(engine_id)
        plist = _inflate(engine, self.engines[engine_id], self.graphs, self.scheme, self.basis)
        return sum((Fraction(p.effective, p.period) for p in plist), Fraction(0))

    def fit_order(self, tag: Tag, fit: str) -> list[Engine]:
        engines = self.arch.engines_of(tag)
        util = {e.id: self.utilization(e.id) for e in engines}
        if fit == "BF":
            return sorted(engines, key=lambda e: (-util[e.id], e.id))
        return sorted(engines, key=lambda e: (util[e.id], e.id))

    def test(self, engine: Engine, extra: Sequence[Placement]) -> Verdict:
        plist = _inflate(engine, self.engines[engine.id] + list(extra), self.graphs, self.scheme, self.basis)
        wl = _workload(engine, plist)
        key = (engine, wl.items)
        hit = self.cache.get(key)
        if hit is None:
            scen = {t: self.scenarios[t] for t in {i.task for i in wl.items} if t in self.scenarios}
            hit = analyze_engine_conditional(wl, scen)
            self.cache[key] = hit
        return hit

    def add(self, engine_id: int, extra: Sequence[Placement]) -> None:
        self.engines[engine_id].extend(extra)


def _placements(concrete: ConcreteTask, windows: WindowAssignment, nodes: Iterable[int]) -> list[Placement]:
    nm = concrete.node_map
    return [
        Placement(concrete.id, v, nm[v].wcet, windows.offset[v], windows.deadline[v], concrete.period)
        for v in sorted(nodes)
    ]


def feasible_sequential(
    tagged: Mapping[Tag, TaggedTask],
    windows: WindowAssignment,
    state: _State,
    fit: str,
) -> dict[Tag, int] | None:
    """Choose one engine per tag for the whole tagged task, or None.

    Engines already chosen for earlier tags of the same concrete count as
    occupied when later tags are tested. Nothing is committed to ``state``.
    """
    trial = state.copy()
    choice: dict[Tag, int] = {}
    for tag, tt in tagged.items():
        extra = _placements(tt.parent, windows, tt.nodes)
        for engine in trial.fit_order(tag, fit):
            if trial.test(engine, extra):
                trial.add(engine.id, extra)
                choice[tag] = engine.id
                break
        else:
            return None
    return choice


def remove_one(
    tagged: TaggedTask,
    omit: str,
    rng: random.Random,
    omitted: Iterable[int] = (),
    critical: frozenset[int] | None = None,
) -> int:
    """Pick the next sub-task to drop from an engine trial."""
    nodes = sorted(tagged.nodes)
    if not nodes:
        raise EmptyTaggedTask(f"no node of tag {tagged.tag} left")
    if len(nodes) == 1:
        return nodes[0]
    if omit == "random":
        return nodes[rng.randrange(len(nodes))]
    task = tagged.parent
    if critical is None:
        critical = longest_paths(task).on_critical_path(task)
    pool = [v for v in nodes if v not in critical] or nodes
    gone = set(omitted)
    near = [v for v in pool if gone & _neighbours(task, v)]
    return min(near or pool)


def _neighbours(task: TaskSpec, v: int) -> set[int]:
    # Adjacent sub-tasks, looking through structural nodes.
    nm = task.node_map
    out: set[int] = set()
    for step in (task.pred, task.succ):
        todo, seen = list(step[v]), set()
        while todo:
            u = todo.pop()
            if u in seen:
                continue
            seen.add(u)
            if nm[u].is_subtask:
                out.add(u)
            else:
                todo.extend(step[u])
    return out


def parallelize(
    concrete: ConcreteTask,
    windows: WindowAssignment,
    nodes: frozenset[int] | None,
    state: _State,
    fit: str,
    omit: str,
    rng: random.Random,
) -> tuple[_State | None, frozenset[int]]:
    """Spread the sub-tasks of each tag over that tag's engines.

    Returns the tentative state holding the placed part and the set of
    sub-tasks left over. If some tag cannot place a single node the state
    is None and the whole node set is returned untouched.
    """
    tagged = filter_tagged(concrete, nodes)
    everything = frozenset(v for tt in tagged.values() for v in tt.nodes)
    critical = longest_paths(concrete).on_critical_path(concrete)
    trial = state.copy()
    left: set[int] = set()
    for tag, tt in tagged.items():
        pending = tuple(tt.nodes)
        placed_any = False
        for engine in trial.fit_order(tag, fit):
            if not pending:
                break
            keep = list(pending)
            dropped: list[int] = []
            while keep and not trial.test(engine, _placements(concrete, windows, keep)):
                v = remove_one(TaggedTask(concrete, tag, tuple(keep)), omit, rng, dropped, critical)
                keep.remove(v)
                dropped.append(v)
            if keep:
                trial.add(engine.id, _placements(concrete, windows, keep))
                placed_any = True
            pending = tuple(sorted(dropped))
        if not placed_any:
            return None, everything
        left.update(pending)
    return trial, frozenset(left)


@dataclass
class _Entry:
    spec: TaskSpec
    concrete: ConcreteTask | None = None
    windows: WindowAssignment | None = None
    nodes: frozenset[int] | None = None
    requeues: int = 0


def allocate_taskset(specs: Sequence[TaskSpec], arch: Architecture, params: AllocParams) -> AllocResult:
    rng = random.Random(params.seed)
    graphs: dict[int, ConcreteTask] = {}
    scenarios: dict[int, list[frozenset[int]]] = {}
    state = _State(arch, params.scheme, params.cost_basis, graphs, scenarios, {})
    queue = deque(_Entry(s) for s in specs)

    def fail(entry: _Entry, reason: str) -> AllocResult:
        alloc = _finish(state)
        pending = [entry] + list(queue)
        for e in pending:
            if e.concrete is not None and e.nodes is not None:
                alloc.unallocated.extend((e.spec.id, v) for v in sorted(e.nodes))
            else:
                alloc.unallocated.extend((e.spec.id, n.id) for n in e.spec.subtasks)
        return AllocResult(False, alloc, reason, entry.spec.id)

    while queue:
        entry = queue.popleft()
        if entry.concrete is not None:
            ordered = [entry.concrete]
            known = {0: entry.windows}
        else:
            ordered = sort_concretes(enumerate_concretes(entry.spec), params.order, arch)
            known = {}

        def candidates():
            # Windows are computed on first use; most sets fit an early concrete.
            for i, c in enumerate(ordered):
                if i not in known:
                    try:
                        known[i] = assign_windows(c, params.slack_mode)
                    except CriticalPathExceedsDeadline:
                        known[i] = None
                if known[i] is not None:
                    yield c, known[i]

        def bind(concrete: ConcreteTask) -> None:
            graphs[concrete.id] = concrete
            sets = conditional_scenarios(concrete)
            if len(sets) > 1:
                scenarios[concrete.id] = sets
            else:
                scenarios.pop(concrete.id, None)

        done = False
        for concrete, windows in candidates():
            bind(concrete)
            tagged = filter_tagged(concrete, entry.nodes)
            choice = feasible_sequential(tagged, windows, state, params.fit)
            if choice is not None:
                for tag, eid in choice.items():
                    state.add(eid, _placements(concrete, windows, tagged[tag].nodes))
                done = True
                break
        if done:
            continue
        if all(w is None for w in known.values()):
            return fail(entry, "critical path exceeds deadline in every concrete task")
        for concrete, windows in candidates():
            bind(concrete)
            trial, rest = parallelize(concrete, windows, entry.nodes, state, params.fit, params.omit, rng)
            if trial is None:
                continue
            state.engines = trial.engines
            if rest:
                if entry.requeues >= MAX_REQUEUES:
                    entry.concrete, entry.windows, entry.nodes = concrete, windows, rest
                    return fail(entry, "residual sub-tasks could not be placed")
                queue.append(_Entry(entry.spec, concrete, windows, rest, entry.requeues + 1))
            done = True
            break
        if not done:
            if entry.concrete is None:
                graphs.pop(entry.spec.id, None)
                scenarios.pop(entry.spec.id, None)
            return fail(entry, "no concrete task fits")
    return AllocResult(True, _finish(state))


def _finish(state: _State) -> Allocation:
    alloc = Allocation(state.arch, state.scheme, {}, dict(state.graphs), [], state.basis)
    for e in state.arch.engines:
        alloc.engines[e.id] = _inflate(e, state.engines[e.id], state.graphs, state.scheme, state.basis)
    return alloc


def verify_allocation(alloc: Allocation) -> list[str]:
    """Re-check tag match, exactly-once placement and every engine's test."""
    problems = []
    seen: dict[tuple[int, int], int] = {}
    scen = {k: conditional_scenarios(g) for k, g in alloc.graphs.items()}
    for eid, plist in sorted(alloc.engines.items()):
        engine = alloc.arch.engine(eid)
        for p in plist:
            g = alloc.graphs.get(p.task)
            if g is None or p.node not in g.node_map:
                problems.append(f"engine {eid}: unknown node {p.task}/{p.node}")
                continue
            if g.node_map[p.node].tag != engine.tag:
                problems.append(f"engine {eid}: node {p.task}/{p.node} has tag {g.node_map[p.node].tag}")
            key = (p.task, p.node)
            if key in seen:
                problems.append(f"node {p.task}/{p.node} on engines {seen[key]} and {eid}")
            seen[key] = eid
        wl = _workload(engine, _inflate(engine, plist, alloc.graphs, alloc.scheme, alloc.basis))
        verdict = analyze_engine_conditional(wl, {t: s for t, s in scen.items() if len(s) > 1})
        if not verdict:
            problems.append(f"engine {eid}: {verdict.reason} at {verdict.witness}")
    for key, g in alloc.graphs.items():
        for n in g.subtasks:
            if (key, n.id) not in seen and (key, n.id) not in alloc.unallocated:
                problems.append(f"node {key}/{n.id} not allocated")
    return problems


__all__ = [
    "AllocParams",
    "AllocResult",
    "Allocation",
    "EmptyTaggedTask",
    "MAX_REQUEUES",
    "Placement",
    "allocate_taskset",
    "feasible_sequential",
    "parallelize",
    "remove_one",
    "verify_allocation",
]
