import itertools
import random
from fractions import Fraction

import pytest

from conftest import branchy, chain, cpus, sub
from oracles import small_tt_instance
from hpcdag.model import Architecture, Engine, Node, NodeKind, TaskSpec
from hpcdag.timing import ilp_split_inflation
from hpcdag.ttable import (
    Method,
    Reservation,
    Row,
    TimeTable,
    TooManyBinaries,
    UnsupportedNodeKind,
    build_ilp,
    construct_timetable,
    linearize_disjunction,
    nb_intervals,
    solve_builtin,
    solve_exhaustive,
    solve_highs,
    solve_lp,
    to_lp,
    validate_timetable,
)


def kinds(violations):
    return {v.kind for v in violations}


# ------------------------------------------------------------------ formulas


def test_split_inflation_and_interval_counts():
    assert ilp_split_inflation(10, 4, 2) == 18
    assert nb_intervals(3, 7) == 8
    assert nb_intervals(3, 2) == 3
    assert nb_intervals(0, 5) == 1
    assert nb_intervals(4, 9, preemptive=False) == 1


def feasible_orders(f, s2, f2, s, big_m=100):
    """Selector pairs under which the rows hold for fixed interval ends."""
    x = [f, s2, f2, s, None, None]
    rows = linearize_disjunction(0, 1, 2, 3, big_m, 4, 5)
    out = []
    for x1, x2 in itertools.product((0, 1), repeat=2):
        x[4], x[5] = x1, x2
        if all(r.holds(x) for r in rows):
            out.append((x1, x2))
    return out


def test_disjunction_rows():
    rows = linearize_disjunction(0, 1, 2, 3, 50, 4, 5)
    assert len(rows) == 5
    assert rows[-1] == Row(((4, 1), (5, 1)), "=", 1)
    assert sum(any(j in (4, 5) and abs(a) == 50 for j, a in r.coef) for r in rows) == 4


def test_disjunction_excludes_overlap_only():
    # [1,3] and [2,4] overlap: nothing works.
    assert feasible_orders(3, 2, 4, 1) == []
    # [1,2] then [3,4]: the first order holds.
    assert feasible_orders(2, 3, 4, 1) == [(0, 1)]
    # [3,4] then [1,2]: the second order holds.
    assert feasible_orders(4, 1, 2, 3) == [(1, 0)]
    # Touching intervals are disjoint.
    assert feasible_orders(2, 2, 4, 1) == [(0, 1)]


def test_disjunction_matches_interval_overlap():
    for a, b, c, d in itertools.product(range(5), repeat=4):
        if a > b or c > d:
            continue
        disjoint = b <= c or d <= a
        assert bool(feasible_orders(b, c, d, a)) == disjoint


# ------------------------------------------------------------------ model


def test_minimal_model():
    m = build_ilp([chain(4, T=10)], cpus(1), 0)
    assert [v.name for v in m.vars] == ["s_0_1_0_0_0", "f_0_1_0_0_0"]
    assert all(v.lo == 0 and v.hi == 10 for v in m.vars)
    assert m.n_binaries == 0
    assert Row(((0, -1), (1, 1)), ">=", 4) in m.rows
    assert m.objective == {1: 1, 0: -1}


def test_variables_only_on_matching_engines():
    arch = Architecture((Engine(0, "CPU"), Engine(1, "GPU"), Engine(2, "CPU")))
    spec = TaskSpec(0, 10, 10, [sub(1, 2), sub(2, 3, "GPU")], [(1, 2)])
    m = build_ilp([spec], arch, 0)
    engines = {(k[1], k[4]) for k in m.intervals}
    assert engines == {(1, 0), (1, 2), (2, 1)}


def test_window_bounds_per_job():
    m = build_ilp([chain(1, T=4, D=3, tid=0), chain(1, T=6, tid=1)], cpus(1), 0)
    assert m.hyperperiod == 12
    for (i, _, k, _, _), (s, f) in m.intervals.items():
        T, D = (4, 3) if i == 0 else (6, 6)
        for j in (s, f):
            assert (m.vars[j].lo, m.vars[j].hi) == (k * T, k * T + D)


def test_deepening_multiplies_intervals():
    spec = TaskSpec(0, 10, 10, [Node(1, NodeKind.SUBTASK, "CPU", 4, 7)], [])
    for it in range(4):
        m = build_ilp([spec], cpus(1), it)
        assert m.n_intervals[(0, 1)] == 2**it
    m = build_ilp([spec], cpus(1, preemptive=False), 3)
    assert m.n_intervals[(0, 1)] == 1


def test_big_m_covers_the_horizon():
    m = build_ilp([chain(1, T=4), chain(1, T=6, tid=1)], cpus(1), 0)
    assert m.big_m == 12 + 6 + 1


def test_branching_nodes_rejected():
    with pytest.raises(UnsupportedNodeKind):
        build_ilp([branchy()], cpus(1), 0)


def test_partition_rows_only_when_partitioned():
    tasks = [chain(2, 2, T=10)]
    g = build_ilp(tasks, cpus(2), 0, Method.GLOBAL)
    p = build_ilp(tasks, cpus(2), 0, Method.PARTITIONED)
    assert not any(v.name.startswith("a_") for v in g.vars)
    assert [v.name for v in p.vars if v.name.startswith("a_")] == ["a_0_1_0", "a_0_1_1", "a_0_2_0", "a_0_2_1"]
    assert len(p.partitions) == 2


def test_lp_export_golden():
    text = to_lp(build_ilp([chain(4, T=10)], cpus(1), 0))
    assert text == (
        "Maximize\n"
        " obj: - s_0_1_0_0_0 + f_0_1_0_0_0\n"
        "Subject To\n"
        " c0: - s_0_1_0_0_0 + f_0_1_0_0_0 >= 0\n"
        " c1: - s_0_1_0_0_0 + f_0_1_0_0_0 >= 4\n"
        "Bounds\n"
        " 0 <= s_0_1_0_0_0 <= 10\n"
        " 0 <= f_0_1_0_0_0 <= 10\n"
        "End\n"
    )


def test_lp_export_is_byte_stable():
    tasks, arch = small_tt_instance(random.Random(3))
    a = to_lp(build_ilp(tasks, arch, 1, Method.PARTITIONED))
    b = to_lp(build_ilp(list(reversed(tasks)), arch, 1, Method.PARTITIONED))
    assert a == b
    assert "Binaries\n" in a and a.endswith("End\n")


# ------------------------------------------------------------------ solvers


def test_rational_simplex_small_lp():
    # max x + y, x + 2y <= 4, 3x + y <= 6
    r = solve_lp([1, 1], [({0: 1, 1: 2}, "<=", 4), ({0: 3, 1: 1}, "<=", 6)], [0, 0], [None, None])
    assert r.status == "optimal"
    assert r.x == (Fraction(8, 5), Fraction(6, 5)) and r.objective == Fraction(14, 5)
    assert solve_lp([1], [({0: 1}, ">=", 3)], [0], [2]).status == "infeasible"
    assert solve_lp([1], [], [0], [None]).status == "unbounded"


def test_no_binaries_means_one_node():
    m = build_ilp([chain(4, T=10)], cpus(1), 0)
    sol = solve_builtin(m)
    assert sol.feasible and sol.nodes == 1
    assert m.violations(sol.x) == []


def test_overlap_toy_model_is_infeasible():
    # Two jobs of length 2 that must both fit in [0, 3] on one engine.
    tasks = [
        TaskSpec(0, 4, 3, [sub(1, 2)], []),
        TaskSpec(1, 4, 3, [sub(1, 2)], []),
    ]
    m = build_ilp(tasks, cpus(1), 0)
    assert m.n_binaries == 2
    assert not solve_builtin(m).feasible
    assert not solve_exhaustive(m).feasible


def test_binary_cap():
    tasks, arch = small_tt_instance(random.Random(14))
    m = build_ilp(tasks, arch, 1)
    with pytest.raises(TooManyBinaries):
        solve_builtin(m, cap=10)
    res = construct_timetable(tasks, arch, cap=10)
    assert not res.success and "cap" in res.reason


@pytest.mark.parametrize("seed", range(40))
def test_builtin_agrees_with_exhaustive(seed):
    rnd = random.Random(seed)
    tasks, arch = small_tt_instance(rnd, max_tasks=2, max_nodes=3, max_engines=2)
    method = rnd.choice(list(Method))
    for it in (0, 1):
        m = build_ilp(tasks, arch, it, method)
        if m.n_binaries > 14:
            continue
        a, b = solve_builtin(m, 30), solve_exhaustive(m, limit=14)
        assert a.feasible == b.feasible
        for sol in (a, b):
            if sol.feasible:
                assert m.violations(sol.x) == []


@pytest.mark.parametrize("seed", range(15))
def test_builtin_agrees_with_highs(seed):
    tasks, arch = small_tt_instance(random.Random(100 + seed))
    m = build_ilp(tasks, arch, 0)
    if m.n_binaries > 120:
        pytest.skip("instance too large for a quick check")
    a, b = solve_builtin(m, 30), solve_highs(m, 30)
    assert a.status != "timeout" and b.status != "timeout"
    assert a.feasible == b.feasible


# ------------------------------------------------------------------ construction


def test_single_node_succeeds_at_first_iteration():
    res = construct_timetable([chain(4, T=10)], cpus(1), max_it=2)
    assert res.success and res.attempts == [(0, "feasible")]
    [(e, r)] = list(res.table.reservations())
    assert e == 0 and r.finish - r.start >= 4


def interleaving_pair():
    """A 4-unit job that only fits in the two gaps left by a short-deadline task."""
    a = TaskSpec(0, 10, 10, [Node(1, NodeKind.SUBTASK, "CPU", 4, 1)], [])
    b = TaskSpec(1, 5, 3, [sub(1, 3)], [])
    return [a, b]


@pytest.mark.parametrize("method", list(Method))
def test_interleaving_needs_a_second_interval(method):
    res = construct_timetable(interleaving_pair(), cpus(1), method, max_it=3)
    assert res.success
    assert [s for _, s in res.attempts] == ["infeasible", "feasible"]
    assert res.table.iteration == 1
    assert validate_timetable(res.table, interleaving_pair(), cpus(1)) == []
    pieces = [r for _, r in res.table.reservations() if r.task == 0]
    assert len(pieces) == 2


def test_overload_fails_after_deepening():
    tasks = [TaskSpec(0, 4, 4, [Node(1, NodeKind.SUBTASK, "CPU", 3, 3)], []), chain(2, T=4, tid=1)]
    res = construct_timetable(tasks, cpus(1), max_it=2)
    assert not res.success
    assert [it for it, _ in res.attempts] == [0, 1, 2]


def test_deepening_stops_when_intervals_saturate():
    tasks = [chain(3, T=4), chain(2, T=4, tid=1)]  # no preemptions allowed
    res = construct_timetable(tasks, cpus(1), max_it=4)
    assert not res.success and res.attempts == [(0, "infeasible")]


def test_split_cost_breaks_monotone_deepening():
    # One extra interval adds one unit of split cost, which no longer fits.
    spec = TaskSpec(0, 5, 5, [Node(1, NodeKind.SUBTASK, "CPU", 4, 1, 1)], [])
    for it, ok in ((0, True), (1, False)):
        assert solve_builtin(build_ilp([spec], cpus(1), it)).feasible == ok


def test_partitioned_tables_pass_global_validation():
    for seed in range(12):
        tasks, arch = small_tt_instance(random.Random(200 + seed), max_tasks=2)
        res = construct_timetable(tasks, arch, Method.PARTITIONED, max_it=2, budget=20)
        if res.success:
            assert validate_timetable(res.table, tasks, arch, Method.PARTITIONED) == []
            assert validate_timetable(res.table, tasks, arch, Method.GLOBAL) == []


def test_precedence_across_engines():
    arch = Architecture((Engine(0, "CPU"), Engine(1, "GPU")))
    spec = TaskSpec(0, 10, 10, [sub(1, 3), sub(2, 3, "GPU"), sub(3, 3)], [(1, 2), (2, 3)])
    res = construct_timetable([spec], arch)
    assert res.success
    ends = {r.node: (r.start, r.finish) for _, r in res.table.reservations()}
    assert ends[1][1] <= ends[2][0] and ends[2][1] <= ends[3][0]


# ------------------------------------------------------------------ validator


def table_of(*rows, hp=10, demand=None, method=Method.GLOBAL):
    t = TimeTable(hp, demand=demand or {}, method=method)
    for e, start, finish, task, node, job in rows:
        t.add(e, Reservation(Fraction(start), Fraction(finish), task, node, job))
    return t


def two_tasks():
    return [chain(2, T=10, tid=0), chain(3, 1, T=10, tid=1)]


def test_validator_clean():
    t = table_of((0, 0, 2, 0, 1, 0), (0, 2, 5, 1, 1, 0), (1, 5, 6, 1, 2, 0))
    assert validate_timetable(t, two_tasks(), cpus(2)) == []


def test_validator_engine_overlap():
    t = table_of((0, 0, 2, 0, 1, 0), (0, 1, 4, 1, 1, 0), (1, 5, 6, 1, 2, 0))
    assert kinds(validate_timetable(t, two_tasks(), cpus(2))) == {"EngineOverlap"}


def test_validator_sufficiency():
    t = table_of((0, 0, 2, 0, 1, 0), (0, 2, 4, 1, 1, 0), (1, 5, 6, 1, 2, 0))
    assert kinds(validate_timetable(t, two_tasks(), cpus(2))) == {"Sufficiency"}


def test_validator_precedence_window_and_job_overlap():
    t = table_of((0, 0, 2, 0, 1, 0), (0, 2, 5, 1, 1, 0), (1, 4, 5, 1, 2, 0))
    assert kinds(validate_timetable(t, two_tasks(), cpus(2))) == {"Precedence"}
    t = table_of((0, 0, 1, 0, 1, 0), (1, "1/2", "3/2", 0, 1, 0), (0, 2, 5, 1, 1, 0), (1, 5, 6, 1, 2, 0))
    assert kinds(validate_timetable(t, two_tasks(), cpus(2))) == {"JobOverlap"}
    t = table_of((0, 9, 11, 0, 1, 0), (0, 2, 5, 1, 1, 0), (1, 5, 6, 1, 2, 0))
    assert "Window" in kinds(validate_timetable(t, two_tasks(), cpus(2)))


def test_validator_partitioning_and_tags():
    t = table_of((0, 0, 1, 0, 1, 0), (1, 1, 2, 0, 1, 0), (0, 2, 5, 1, 1, 0), (1, 5, 6, 1, 2, 0))
    assert validate_timetable(t, two_tasks(), cpus(2), Method.GLOBAL) == []
    assert kinds(validate_timetable(t, two_tasks(), cpus(2), Method.PARTITIONED)) == {"NotPartitioned"}
    arch = Architecture((Engine(0, "CPU"), Engine(1, "GPU")))
    assert "TagMismatch" in kinds(validate_timetable(t, two_tasks(), arch))
    assert "UnknownEngine" in kinds(validate_timetable(t, two_tasks(), cpus(1)))
