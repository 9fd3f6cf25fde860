"""Concrete-task enumeration, ordering and tag filtering."""

from __future__ import annotations

import enum
import math
import random
from fractions import Fraction
from typing import Iterator

from .model import (
    Architecture,
    ConcreteTask,
    Node,
    NodeKind,
    Region,
    TaggedTask,
    TaskSpec,
    Tag,
)


class OrderRelation(str, enum.Enum):
    O = "O"  # lowest total utilization first
    R = "R"  # lowest scarcity-weighted utilization first


class UnknownTag(KeyError):
    pass


def _choice_vectors(spec: TaskSpec, kind: NodeKind) -> Iterator[tuple[tuple[int, int], ...]]:
    """Branch vectors over the reachable ``kind`` regions, lexicographic order.

    Regions nested in a non-selected branch are not part of the vector.
    """
    regions = spec.regions
    heads = sorted(h for h, r in regions.items() if spec.node_map[h].kind is kind)
    if not heads:
        yield ()
        return

    def rec(i: int, removed: frozenset[int], acc: tuple[tuple[int, int], ...]):
        while i < len(heads) and heads[i] in removed:
            i += 1
        if i == len(heads):
            yield acc
            return
        r = regions[heads[i]]
        for k, _ in enumerate(r.branches):
            drop = removed.union(*(b for idx, b in enumerate(r.branches) if idx != k))
            yield from rec(i + 1, drop, acc + ((r.head, k),))

    yield from rec(0, frozenset(), ())


def _dummy_tag(spec: TaskSpec, head: Node) -> Tag:
    if head.tag:
        return head.tag
    return min(spec.subtasks, key=lambda n: n.id).tag  # type: ignore[return-value]


def resolve(spec: TaskSpec, choices: tuple[tuple[int, int], ...]) -> ConcreteTask:
    """Build the concrete task selected by an alternative branch vector."""
    regions = spec.regions
    chosen = dict(choices)
    removed: set[int] = set()
    cut_edges: set[tuple[int, int]] = set()
    for h in sorted(chosen):
        r: Region = regions[h]
        k = chosen[h]
        for idx, (succ, body) in enumerate(zip(r.successors, r.branches)):
            if idx != k:
                removed |= body
                cut_edges.add((h, succ))
    nodes = []
    for n in spec.nodes:
        if n.id in removed:
            continue
        if n.kind is NodeKind.ALTERNATIVE:
            n = Node(n.id, NodeKind.SUBTASK, _dummy_tag(spec, n), 0, 0, 0)
        nodes.append(n)
    edges = tuple(
        (u, v) for u, v in spec.edges if u not in removed and v not in removed and (u, v) not in cut_edges
    )
    return ConcreteTask(spec.id, spec.period, spec.deadline, tuple(nodes), edges, spec_id=spec.id, choices=choices)


def enumerate_concretes(spec: TaskSpec) -> list[ConcreteTask]:
    return [resolve(spec, v) for v in _choice_vectors(spec, NodeKind.ALTERNATIVE)]


def count_concretes(spec: TaskSpec) -> int:
    return sum(1 for _ in _choice_vectors(spec, NodeKind.ALTERNATIVE))


def as_concrete(task: TaskSpec) -> ConcreteTask:
    if isinstance(task, ConcreteTask):
        return task
    if any(n.kind is NodeKind.ALTERNATIVE for n in task.nodes):
        raise ValueError(f"task {task.id} still has alternative nodes")
    return ConcreteTask(task.id, task.period, task.deadline, task.nodes, task.edges)


def order_key(concrete: ConcreteTask, relation: OrderRelation, arch: Architecture) -> tuple:
    total = Fraction(0)
    scarce = Fraction(0)
    for n in concrete.subtasks:
        m = arch.count(n.tag)  # type: ignore[arg-type]
        if m == 0:
            raise UnknownTag(n.tag)
        u = Fraction(n.wcet, concrete.period)
        total += u
        scarce += u / m
    if OrderRelation(relation) is OrderRelation.O:
        return (total, scarce, concrete.choices)
    return (scarce, total, concrete.choices)


def sort_concretes(concretes: list[ConcreteTask], relation: OrderRelation, arch: Architecture) -> list[ConcreteTask]:
    if len({c.period for c in concretes}) > 1:
        return sorted(concretes, key=lambda c: order_key(c, relation, arch))
    # One shared period: integer sums scaled by T * lcm(engine counts) order
    # exactly like the utilization sums.
    scale = math.lcm(*(arch.count(t) for t in arch.tags)) if arch.tags else 1
    swap = OrderRelation(relation) is OrderRelation.R

    def key(c: ConcreteTask) -> tuple:
        total = scarce = 0
        for n in c.subtasks:
            m = arch.count(n.tag)  # type: ignore[arg-type]
            if m == 0:
                raise UnknownTag(n.tag)
            total += n.wcet * scale
            scarce += n.wcet * (scale // m)
        return (scarce, total, c.choices) if swap else (total, scarce, c.choices)

    return sorted(concretes, key=key)


def filter_tagged(concrete: ConcreteTask, nodes: frozenset[int] | None = None) -> dict[Tag, TaggedTask]:
    """Split the sub-tasks of ``concrete`` (optionally a subset) by tag."""
    groups: dict[Tag, list[int]] = {}
    for n in concrete.subtasks:
        if nodes is None or n.id in nodes:
            groups.setdefault(n.tag, []).append(n.id)  # type: ignore[arg-type]
    return {t: TaggedTask(concrete, t, tuple(ids)) for t, ids in sorted(groups.items())}


def derive_cpdag(spec: TaskSpec, rng: random.Random) -> ConcreteTask:
    vectors = list(_choice_vectors(spec, NodeKind.ALTERNATIVE))
    return resolve(spec, vectors[rng.randrange(len(vectors))])


def conditional_scenarios(task: TaskSpec) -> list[frozenset[int]]:
    """Node sets that execute together, one per conditional branch vector."""
    regions = task.regions
    out = []
    for vec in _choice_vectors(task, NodeKind.CONDITIONAL):
        removed: set[int] = set()
        for h, k in vec:
            r = regions[h]
            for idx, body in enumerate(r.branches):
                if idx != k:
                    removed |= body
        out.append(frozenset(n.id for n in task.nodes if n.id not in removed))
    return out


__all__ = [
    "OrderRelation",
    "UnknownTag",
    "as_concrete",
    "conditional_scenarios",
    "count_concretes",
    "derive_cpdag",
    "enumerate_concretes",
    "filter_tagged",
    "order_key",
    "resolve",
    "sort_concretes",
]
