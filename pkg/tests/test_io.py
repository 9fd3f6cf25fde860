import json
import random
from fractions import Fraction

import pytest

from conftest import branchy, chain, cpus
from hpcdag import io
from hpcdag.alloc import AllocParams, allocate_taskset, verify_allocation
from hpcdag.bench import xavier
from hpcdag.gen import GenConfig, gen_taskset
from hpcdag.ttable import construct_timetable, validate_timetable


def round_trip(obj):
    return json.loads(io.dumps(obj))


def test_taskset_round_trip():
    arch = xavier()
    specs = gen_taskset(arch, GenConfig(targets={"CPU": 3.0, "DLA": 0.4}), random.Random(1))
    text = io.dumps(io.taskset_to_json(specs, arch, {"seed": 1}))
    back, arch2 = io.taskset_from_json(json.loads(text))
    assert back == sorted(specs, key=lambda t: t.id)
    assert arch2 == arch
    assert io.dumps(io.taskset_to_json(back, arch2, {"seed": 1})) == text


def test_writer_is_order_independent():
    arch = cpus(2)
    a = io.dumps(io.taskset_to_json([chain(1, tid=0), chain(2, tid=1)], arch))
    b = io.dumps(io.taskset_to_json([chain(2, tid=1), chain(1, tid=0)], arch))
    assert a == b


def test_rational_fields():
    assert io.rational("3/10") == Fraction(3, 10)
    assert io.rational(0.1) == Fraction(1, 10)
    assert io.rational(2) == 2
    for bad in (True, "x", None):
        with pytest.raises(io.FormatError):
            io.rational(bad)
    arch = io.arch_from_json({"engines": [{"id": 0, "tag": "CPU", "preempt_cost_ratio": "1/5000"}]})
    assert arch.engine(0).preempt_cost_ratio == Fraction(1, 5000)
    assert io.arch_to_json(arch)["engines"][0]["preempt_cost_ratio"] == "1/5000"


@pytest.mark.parametrize(
    "obj",
    [
        {"architecture": {"engines": []}},
        {"architecture": {"engines": []}, "tasks": [], "extra": 1},
        {"architecture": {"engines": [{"id": "0", "tag": "CPU"}]}, "tasks": []},
        {"architecture": {"engines": []}, "tasks": [{"id": 0, "period": 10, "deadline": 10, "nodes": [], "edges": [[1]]}]},
        {"architecture": {"engines": []}, "tasks": [{"id": 0, "period": 10, "deadline": 10, "nodes": [{"id": 1, "kind": "Nope"}], "edges": []}]},
    ],
)
def test_strict_reader(obj):
    with pytest.raises(io.FormatError):
        io.taskset_from_json(obj)


def test_meta_is_ignored():
    obj = io.taskset_to_json([chain(1)], cpus(1))
    obj["meta"] = {"anything": [1, 2]}
    obj["tasks"][0]["meta"] = "note"
    specs, _ = io.taskset_from_json(obj)
    assert specs == [chain(1)]


def test_allocation_round_trip():
    arch = cpus(2)
    specs = [branchy(tid=0), chain(3, 4, T=20, tid=1)]
    res = allocate_taskset(specs, arch, AllocParams.from_name("WRF-P"))
    assert res.success
    obj = round_trip(io.allocation_to_json(res.allocation))
    back = io.allocation_from_json(obj, specs, arch)
    assert back.engines == res.allocation.engines
    assert back.graphs == res.allocation.graphs
    assert back.scheme == res.allocation.scheme and back.basis == res.allocation.basis
    assert verify_allocation(back) == []


def test_allocation_unknown_task():
    arch = cpus(1)
    res = allocate_taskset([chain(1)], arch, AllocParams())
    obj = io.allocation_to_json(res.allocation)
    with pytest.raises(io.FormatError):
        io.allocation_from_json(obj, [chain(1, tid=5)], arch)


def test_timetable_round_trip():
    tasks = [chain(2, 3, T=10), chain(1, T=5, tid=1)]
    res = construct_timetable(tasks, cpus(2))
    assert res.success
    obj = round_trip(io.timetable_to_json(res.table))
    back = io.timetable_from_json(obj)
    assert list(back.reservations()) == list(res.table.reservations())
    assert back.demand == res.table.demand and back.method == res.table.method
    assert validate_timetable(back, tasks, cpus(2)) == []


def test_fractional_times_survive():
    obj = {
        "hyperperiod": 4,
        "reservations": [{"engine": 0, "task": 0, "node": 1, "job": 0, "start": "1/3", "finish": 2}],
    }
    table = io.timetable_from_json(obj)
    [(_, r)] = list(table.reservations())
    assert r.start == Fraction(1, 3)
    assert io.timetable_to_json(table)["reservations"][0]["start"] == "1/3"
