"""Random HPC-DAG task sets.

Graphs are layered DAGs (depth bounded by the layer count) repaired to be
weakly connected. Some sub-tasks are then wrapped into alternative or
conditional blocks with one extra sibling. Utilizations come from UUniFast,
first per task for each tag, then per sub-task within a task.
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .model import Architecture, Node, NodeKind, TaskSpec, Tag, hop_counts

PERIODS = (120, 240, 600, 1200, 3000, 6000, 12000, 30000, 60000, 120000)
_MAX_DISCARDS = 1000


class InfeasibleTarget(ValueError):
    pass


@dataclass(frozen=True)
class GenConfig:
    targets: Mapping[Tag, float] = field(default_factory=dict)
    n_tasks: tuple[int, int] = (20, 25)
    n_nodes: tuple[int, int] = (10, 30)
    edge_prob: float = 0.2
    depth_factor: float = 0.4
    branch_prob: float = 0.7
    max_alternatives: int = 10
    max_preemptions: tuple[int, int] = (0, 4)
    split_cost: tuple[int, int] = (0, 0)
    periods: tuple[int, ...] = PERIODS
    seed: int = 0

    def check(self, arch: Architecture | None = None) -> None:
        for name in ("edge_prob", "branch_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} outside [0, 1]")
        lo, hi = self.n_nodes
        if not 1 <= lo <= hi:
            raise ValueError("bad node count range")
        if not 1 <= self.n_tasks[0] <= self.n_tasks[1]:
            raise ValueError("bad task count range")
        for tag, u in self.targets.items():
            if u < 0:
                raise ValueError(f"negative target for {tag}")
            if arch is not None and u > arch.count(tag):
                raise InfeasibleTarget(f"target {u} for {tag} exceeds {arch.count(tag)} engines")


def derive_seed(*parts: object) -> int:
    """Stable 63-bit seed from arbitrary printable parts."""
    h = hashlib.blake2b(repr(parts).encode(), digest_size=8).digest()
    return int.from_bytes(h, "big") >> 1


def uunifast_discard(n: int, total: float, rng: random.Random, discard: bool = True) -> list[float]:
    """``n`` random shares summing to ``total``.

    With ``discard`` any draw holding a share above 1 is thrown away. Near
    ``total == n`` almost every draw is rejected, so after a bounded number
    of tries the last draw is capped at 1 and the excess spread over the
    remaining headroom instead.
    """
    if n < 1:
        raise ValueError("need at least one share")
    if total < 0:
        raise ValueError("negative total")
    if discard and total > n:
        raise InfeasibleTarget(f"{total} cannot be split into {n} shares of at most 1")
    if discard and total == n:
        # The only valid split; rejection sampling would never find it.
        return [1.0] * n
    shares: list[float] = []
    for _ in range(_MAX_DISCARDS):
        shares = []
        left = total
        for i in range(1, n):
            nxt = left * rng.random() ** (1.0 / (n - i))
            shares.append(left - nxt)
            left = nxt
        shares.append(left)
        if not discard or all(s <= 1.0 for s in shares):
            return shares
    return _cap_shares(shares)


def _cap_shares(shares: list[float]) -> list[float]:
    out = list(shares)
    while True:
        excess = sum(max(0.0, s - 1.0) for s in out)
        if excess <= 1e-12:
            return [min(s, 1.0) for s in out]
        out = [min(s, 1.0) for s in out]
        room = [1.0 - s for s in out]
        free = sum(room)
        out = [s + excess * r / free for s, r in zip(out, room)]


# ------------------------------------------------------------------ graphs


@dataclass
class _Shape:
    """Graph skeleton before tags and timing are attached."""

    subtasks: list[int]
    kinds: dict[int, NodeKind]
    edges: set[tuple[int, int]]


def _layered(b: int, rng: random.Random, cfg: GenConfig) -> tuple[list[int], set[tuple[int, int]]]:
    max_layers = max(2, min(b, math.floor(cfg.depth_factor * b)))
    n_layers = rng.randint(2, max_layers) if b >= 2 else 1
    # Every layer gets one node, the rest land anywhere.
    layer = list(range(n_layers)) + [rng.randrange(n_layers) for _ in range(b - n_layers)]
    rng.shuffle(layer)
    edges = {
        (u, v) for u in range(b) for v in range(b) if layer[u] < layer[v] and rng.random() < cfg.edge_prob
    }
    _connect(b, layer, edges, rng)
    return layer, edges


def _connect(b: int, layer: list[int], edges: set[tuple[int, int]], rng: random.Random) -> None:
    parent = list(range(b))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v in edges:
        parent[find(u)] = find(v)
    while True:
        comps: dict[int, list[int]] = {}
        for v in range(b):
            comps.setdefault(find(v), []).append(v)
        if len(comps) <= 1:
            return
        groups = sorted(comps.values())
        pairs = [
            (u, v)
            for i, a in enumerate(groups)
            for c in groups[i + 1 :]
            for u in a
            for v in c
            if layer[u] != layer[v]
        ]
        u, v = pairs[rng.randrange(len(pairs))]
        if layer[u] > layer[v]:
            u, v = v, u
        edges.add((u, v))
        parent[find(u)] = find(v)


def _shape(n: int, rng: random.Random, cfg: GenConfig) -> _Shape:
    """Skeleton with exactly ``n`` sub-tasks.

    A base graph of ``b`` nodes is drawn and each node, with probability
    ``branch_prob``, marks one successor for wrapping. Each wrap adds one
    sub-task, so ``b`` grows until enough wraps are available.
    """
    b = max(1, math.ceil(n / (1 + cfg.branch_prob)))
    while True:
        if b >= n:
            _, edges = _layered(n, rng, cfg)
            return _Shape(list(range(n)), {v: NodeKind.SUBTASK for v in range(n)}, edges)
        _, edges = _layered(b, rng, cfg)
        succ: dict[int, list[int]] = {v: [] for v in range(b)}
        for u, v in sorted(edges):
            succ[u].append(v)
        marked: list[int] = []
        for v in range(b):
            free = [w for w in succ[v] if w not in marked]
            if free and rng.random() < cfg.branch_prob:
                marked.append(free[rng.randrange(len(free))])
        if len(marked) >= n - b:
            rng.shuffle(marked)
            return _wrap(b, edges, sorted(marked[: n - b]), rng, cfg)
        b += 1


def _wrap(b: int, edges: set[tuple[int, int]], targets: Sequence[int], rng: random.Random, cfg: GenConfig) -> _Shape:
    kinds = {v: NodeKind.SUBTASK for v in range(b)}
    subtasks = list(range(b))
    next_id = b
    n_alt = 0
    edges = set(edges)
    for w in targets:
        twin, head, junction = next_id, next_id + 1, next_id + 2
        next_id += 3
        use_alt = rng.random() < 0.5 and n_alt < cfg.max_alternatives
        n_alt += use_alt
        kinds[twin] = NodeKind.SUBTASK
        kinds[head] = NodeKind.ALTERNATIVE if use_alt else NodeKind.CONDITIONAL
        kinds[junction] = NodeKind.JUNCTION
        subtasks.append(twin)
        preds = [u for u, v in edges if v == w]
        succs = [v for u, v in edges if u == w]
        edges -= {(u, w) for u in preds} | {(w, v) for v in succs}
        edges |= {(u, head) for u in preds} | {(junction, v) for v in succs}
        edges |= {(head, w), (head, twin), (w, junction), (twin, junction)}
    return _Shape(subtasks, kinds, edges)


def gen_task_graph(rng: random.Random, cfg: GenConfig, task_id: int = 0, tags: Sequence[Tag] = ("CPU",)) -> TaskSpec:
    """One task graph with uniformly drawn tags.

    WCETs are set to 1 so the graph is usable on its own; ``gen_taskset``
    fills in real execution times.
    """
    n = rng.randint(*cfg.n_nodes)
    shape = _shape(n, rng, cfg)
    period = rng.choice(cfg.periods)
    nodes = []
    for v in sorted(shape.kinds):
        kind = shape.kinds[v]
        if kind is NodeKind.SUBTASK:
            nodes.append(
                Node(v, kind, rng.choice(list(tags)), 1, rng.randint(*cfg.max_preemptions), rng.randint(*cfg.split_cost))
            )
        else:
            nodes.append(Node(v, kind))
    return TaskSpec(task_id, period, period, tuple(nodes), tuple(sorted(shape.edges)))


def _retag(spec: TaskSpec, budgets: Mapping[Tag, float], rng: random.Random) -> dict[int, Tag]:
    """Move tags so each tag with budget ``u`` has at least ``ceil(u)`` nodes."""
    tags = {n.id: n.tag for n in spec.subtasks}
    need = {t: math.ceil(u) if u > 0 else 0 for t, u in budgets.items()}
    if sum(need.values()) > len(tags):
        raise InfeasibleTarget(f"task {spec.id}: {len(tags)} sub-tasks cannot carry {dict(need)}")
    while True:
        have: dict[Tag, list[int]] = {}
        for v, t in sorted(tags.items()):
            have.setdefault(t, []).append(v)
        short = [t for t in sorted(need) if len(have.get(t, [])) < need[t]]
        if not short:
            return tags
        donors = [v for v, t in sorted(tags.items()) if len(have[t]) > need.get(t, 0)]
        tags[donors[rng.randrange(len(donors))]] = short[0]


def gen_taskset(arch: Architecture, cfg: GenConfig, rng: random.Random | None = None) -> list[TaskSpec]:
    cfg.check(arch)
    rng = rng if rng is not None else random.Random(cfg.seed)
    tags = list(arch.tags)
    n = rng.randint(*cfg.n_tasks)
    graphs = [gen_task_graph(rng, cfg, i, tags) for i in range(n)]
    # Task-level shares may exceed 1: a task can use several engines.
    per_task = {t: uunifast_discard(n, float(cfg.targets.get(t, 0.0)), rng, discard=False) for t in tags}
    out = []
    for i, g in enumerate(graphs):
        budgets = {t: per_task[t][i] for t in tags}
        tag_of = _retag(g, budgets, rng)
        util: dict[int, float] = {v: 0.0 for v in tag_of}
        for t in tags:
            ids = [v for v in sorted(tag_of) if tag_of[v] == t]
            if ids and budgets[t] > 0:
                for v, u in zip(ids, uunifast_discard(len(ids), budgets[t], rng)):
                    util[v] = u
        nodes = []
        for node in g.nodes:
            if node.is_subtask:
                node = Node(
                    node.id,
                    node.kind,
                    tag_of[node.id],
                    round(util[node.id] * g.period),
                    node.max_preemptions,
                    node.split_cost,
                )
            nodes.append(node)
        out.append(TaskSpec(g.id, g.period, g.deadline, tuple(nodes), g.edges))
    return out


def depth(spec: TaskSpec) -> int:
    """Largest number of sub-tasks on one path."""
    return max(hop_counts(spec).values(), default=0)


__all__ = [
    "GenConfig",
    "InfeasibleTarget",
    "PERIODS",
    "depth",
    "derive_seed",
    "gen_task_graph",
    "gen_taskset",
    "uunifast_discard",
]
