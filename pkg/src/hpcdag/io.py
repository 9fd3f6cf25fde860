"""JSON formats for task sets, allocations and schedule tables.

Readers are strict: any field not listed here, except a free-form
``"meta"`` object, is rejected. Writers sort nodes, edges and engines so
that equal inputs serialize to equal bytes.
"""

from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path
from typing import Any, Mapping, Sequence

from .alloc import Allocation, Placement
from .expand import resolve
from .model import Architecture, ConcreteTask, Engine, Node, TaskSpec
from .timing import CostBasis, PreemptionScheme
from .ttable import Method, Reservation, TimeTable


class FormatError(ValueError):
    pass


def _fields(obj: Any, where: str, required: Sequence[str], optional: Sequence[str] = ()) -> dict:
    if not isinstance(obj, Mapping):
        raise FormatError(f"{where}: expected an object")
    allowed = set(required) | set(optional) | {"meta"}
    extra = sorted(set(obj) - allowed)
    if extra:
        raise FormatError(f"{where}: unknown fields {extra}")
    missing = [k for k in required if k not in obj]
    if missing:
        raise FormatError(f"{where}: missing fields {missing}")
    return dict(obj)


def _int(v: Any, where: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise FormatError(f"{where}: expected an integer, got {v!r}")
    return v


def rational(v: Any) -> Fraction:
    """Fraction from an int, a decimal number or an ``"a/b"`` string."""
    if isinstance(v, bool):
        raise FormatError(f"expected a number, got {v!r}")
    if isinstance(v, (int, str)):
        try:
            return Fraction(v)
        except ValueError as exc:
            raise FormatError(str(exc)) from None
    if isinstance(v, float):
        return Fraction(str(v))
    raise FormatError(f"expected a number, got {v!r}")


def _rat_out(v: Fraction) -> int | str:
    v = Fraction(v)
    return v.numerator if v.denominator == 1 else str(v)


# ------------------------------------------------------------------ task sets


def arch_to_json(arch: Architecture) -> dict:
    return {
        "engines": [
            {"id": e.id, "tag": e.tag, "preemptive": e.preemptive, "preempt_cost_ratio": _rat_out(e.preempt_cost_ratio)}
            for e in sorted(arch.engines, key=lambda e: e.id)
        ]
    }


def arch_from_json(obj: Any) -> Architecture:
    obj = _fields(obj, "architecture", ["engines"])
    engines = []
    for i, e in enumerate(obj["engines"]):
        e = _fields(e, f"engine {i}", ["id", "tag"], ["preemptive", "preempt_cost_ratio"])
        engines.append(
            Engine(
                _int(e["id"], f"engine {i}"),
                str(e["tag"]),
                bool(e.get("preemptive", True)),
                rational(e.get("preempt_cost_ratio", 0)),
            )
        )
    return Architecture(tuple(engines))


def task_to_json(t: TaskSpec) -> dict:
    nodes = []
    for n in sorted(t.nodes, key=lambda n: n.id):
        d: dict[str, Any] = {"id": n.id, "kind": n.kind.value}
        if n.is_subtask:
            d.update(tag=n.tag, wcet=n.wcet, max_preemptions=n.max_preemptions, split_cost=n.split_cost)
        nodes.append(d)
    return {
        "id": t.id,
        "period": t.period,
        "deadline": t.deadline,
        "nodes": nodes,
        "edges": [list(e) for e in sorted(t.edges)],
    }


def task_from_json(obj: Any) -> TaskSpec:
    obj = _fields(obj, "task", ["id", "period", "deadline", "nodes", "edges"])
    where = f"task {obj['id']}"
    nodes = []
    for n in obj["nodes"]:
        n = _fields(n, f"{where} node", ["id", "kind"], ["tag", "wcet", "max_preemptions", "split_cost"])
        try:
            nodes.append(
                Node(
                    _int(n["id"], where),
                    n["kind"],
                    n.get("tag"),
                    _int(n.get("wcet", 0), where),
                    _int(n.get("max_preemptions", 0), where),
                    _int(n.get("split_cost", 0), where),
                )
            )
        except ValueError as exc:
            raise FormatError(f"{where}: {exc}") from None
    edges = []
    for e in obj["edges"]:
        if not isinstance(e, (list, tuple)) or len(e) != 2:
            raise FormatError(f"{where}: bad edge {e!r}")
        edges.append((_int(e[0], where), _int(e[1], where)))
    return TaskSpec(_int(obj["id"], where), _int(obj["period"], where), _int(obj["deadline"], where), tuple(nodes), tuple(edges))


def taskset_to_json(specs: Sequence[TaskSpec], arch: Architecture, meta: Mapping | None = None) -> dict:
    out: dict[str, Any] = {
        "architecture": arch_to_json(arch),
        "tasks": [task_to_json(t) for t in sorted(specs, key=lambda t: t.id)],
    }
    if meta:
        out["meta"] = dict(meta)
    return out


def taskset_from_json(obj: Any) -> tuple[list[TaskSpec], Architecture]:
    obj = _fields(obj, "task set", ["architecture", "tasks"])
    return [task_from_json(t) for t in obj["tasks"]], arch_from_json(obj["architecture"])


# ------------------------------------------------------------------ allocations


def allocation_to_json(alloc: Allocation) -> dict:
    return {
        "scheme": alloc.scheme.value,
        "cost_basis": alloc.basis.value,
        "concrete": [
            {"task": k, "spec": g.spec_id, "choices": [list(c) for c in g.choices]}
            for k, g in sorted(alloc.graphs.items())
        ],
        "engines": [
            {
                "id": eid,
                "items": [
                    {
                        "task": p.task,
                        "node": p.node,
                        "wcet": p.wcet,
                        "inflated": p.effective,
                        "offset": p.offset,
                        "deadline": p.deadline,
                        "period": p.period,
                    }
                    for p in sorted(plist, key=lambda p: (p.task, p.node))
                ],
            }
            for eid, plist in sorted(alloc.engines.items())
        ],
        "unallocated": [list(u) for u in sorted(alloc.unallocated)],
    }


def allocation_from_json(obj: Any, specs: Sequence[TaskSpec], arch: Architecture) -> Allocation:
    obj = _fields(obj, "allocation", ["scheme", "concrete", "engines"], ["cost_basis", "unallocated"])
    by_id = {t.id: t for t in specs}
    graphs: dict[int, ConcreteTask] = {}
    for c in obj["concrete"]:
        c = _fields(c, "concrete task", ["task", "spec", "choices"])
        spec = by_id.get(c["spec"])
        if spec is None:
            raise FormatError(f"allocation refers to unknown task {c['spec']}")
        graphs[c["task"]] = resolve(spec, tuple((int(a), int(b)) for a, b in c["choices"]))
    engines: dict[int, list[Placement]] = {}
    for e in obj["engines"]:
        e = _fields(e, "engine", ["id", "items"])
        plist = []
        for p in e["items"]:
            p = _fields(p, f"engine {e['id']} item", ["task", "node", "wcet", "offset", "deadline", "period"], ["inflated"])
            plist.append(Placement(p["task"], p["node"], p["wcet"], p["offset"], p["deadline"], p["period"], p.get("inflated", -1)))
        engines[_int(e["id"], "engine")] = plist
    for e in arch.engines:
        engines.setdefault(e.id, [])
    return Allocation(
        arch,
        PreemptionScheme(obj["scheme"]),
        engines,
        graphs,
        [tuple(u) for u in obj.get("unallocated", [])],
        CostBasis(obj.get("cost_basis", CostBasis.PREEMPTED.value)),
    )


# ------------------------------------------------------------------ tables


def timetable_to_json(table: TimeTable) -> dict:
    return {
        "hyperperiod": table.hyperperiod,
        "method": table.method.value,
        "iteration": table.iteration,
        "demand": [[i, j, c] for (i, j), c in sorted(table.demand.items())],
        "reservations": [
            {"engine": e, "task": r.task, "node": r.node, "job": r.job, "start": _rat_out(r.start), "finish": _rat_out(r.finish)}
            for e, r in table.reservations()
        ],
    }


def timetable_from_json(obj: Any) -> TimeTable:
    obj = _fields(obj, "time table", ["hyperperiod", "reservations"], ["method", "iteration", "demand"])
    table = TimeTable(
        _int(obj["hyperperiod"], "hyperperiod"),
        demand={(int(i), int(j)): int(c) for i, j, c in obj.get("demand", [])},
        method=Method(obj.get("method", "global")),
        iteration=int(obj.get("iteration", 0)),
    )
    for r in obj["reservations"]:
        r = _fields(r, "reservation", ["engine", "task", "node", "job", "start", "finish"])
        table.engines.setdefault(r["engine"], []).append(
            Reservation(rational(r["start"]), rational(r["finish"]), r["task"], r["node"], r["job"])
        )
    for lst in table.engines.values():
        lst.sort()
    return table


# ------------------------------------------------------------------ files


def dumps(obj: Any) -> str:
    return json.dumps(obj, indent=1) + "\n"


def read_json(path: str | Path) -> Any:
    with open(path) as fh:
        return json.load(fh)


def write_json(path: str | Path, obj: Any) -> None:
    Path(path).write_text(dumps(obj))


__all__ = [
    "FormatError",
    "allocation_from_json",
    "allocation_to_json",
    "arch_from_json",
    "arch_to_json",
    "dumps",
    "rational",
    "read_json",
    "task_from_json",
    "task_to_json",
    "taskset_from_json",
    "taskset_to_json",
    "timetable_from_json",
    "timetable_to_json",
    "write_json",
]
