import random

import pytest
from hypothesis import given, strategies as st

from hpcdag.analysis import (
    EngineWorkload,
    Item,
    analyze_engine_conditional,
    dbf,
    dbf_test,
    simulate_edf,
)
from hpcdag.model import Engine

from oracles import brute_dbf, brute_dbf_test, brute_windows, small_periods_workload

CPU = Engine(0, "CPU", True)
DLA = Engine(1, "DLA", False)


def wl(*items, engine=CPU):
    return EngineWorkload(engine, tuple(Item(k, 0, *it) for k, it in enumerate(items)))


def with_wcet(w, k, c):
    items = list(w.items)
    i = items[k]
    items[k] = Item(i.task, i.node, c, i.offset, i.deadline, i.period)
    return EngineWorkload(w.engine, tuple(items))


workloads = st.integers(0, 2**32).map(small_periods_workload)


class TestDemand:
    single = wl((2, 0, 5, 10))

    # jobs [0,5], [10,15], [20,25]; a window counts jobs it fully contains
    @pytest.mark.parametrize("t1, t2, expected", [(0, 5, 2), (0, 4, 0), (0, 14, 2), (0, 15, 4), (0, 25, 6), (1, 25, 4)])
    def test_values(self, t1, t2, expected):
        assert dbf(self.single, t1, t2) == expected

    def test_rejects_empty_window(self):
        with pytest.raises(ValueError):
            dbf(self.single, 5, 5)

    @given(workloads, st.integers(0, 100), st.integers(1, 100), st.integers(1, 100))
    def test_matches_job_enumeration(self, w, a, la, lb):
        assert dbf(w, a, a + la) == brute_dbf(w.items, a, a + la)
        # superadditive over adjacent windows
        b, c = a + la, a + la + lb
        assert dbf(w, a, c) >= dbf(w, a, b) + dbf(w, b, c)


class TestDemandTest:
    def test_single_item(self):
        assert dbf_test(wl((2, 0, 5, 10)))

    def test_overload_has_witness(self):
        v = dbf_test(wl((6, 0, 10, 10), (6, 0, 10, 10)))
        assert not v and v.witness == (0, 10)

    def test_blocking(self):
        items = ((5, 0, 5, 10), (6, 0, 12, 12))
        v = dbf_test(wl(*items, engine=DLA))
        assert not v and v.witness == (0, 5)
        # preemptively the first violation comes later, from demand alone
        assert dbf_test(wl(*items, engine=CPU)).witness == (0, 15)

    def test_blocking_only_matters_without_preemption(self):
        items = ((2, 0, 3, 10), (6, 0, 10, 10))
        assert dbf_test(wl(*items, engine=CPU))
        assert not dbf_test(wl(*items, engine=DLA))

    def test_utilization_above_one(self):
        assert not dbf_test(wl((3, 0, 4, 4), (3, 0, 6, 6)))

    def test_window_shorter_than_wcet(self):
        assert not dbf_test(wl((4, 2, 5, 10)))

    def test_empty(self):
        assert dbf_test(EngineWorkload(CPU, ()))

    def test_order_of_items_does_not_matter(self):
        a = wl((2, 0, 5, 10), (3, 1, 7, 8), (1, 0, 3, 6))
        b = EngineWorkload(CPU, tuple(reversed(a.items)))
        assert bool(dbf_test(a)) == bool(dbf_test(b))

    @given(workloads)
    def test_agrees_with_window_enumeration(self, w):
        assert bool(dbf_test(w)) == brute_dbf_test(w)

    @given(workloads)
    def test_witness_is_a_violated_window(self, w):
        v = dbf_test(w)
        if v or v.reason != "demand exceeds window":
            return
        t1, t2 = v.witness
        assert dbf(w, t1, t2) > 0

    @given(workloads, st.data())
    def test_monotone_in_wcet(self, w, data):
        if dbf_test(w):
            return
        k = data.draw(st.integers(0, len(w.items) - 1))
        assert not dbf_test(with_wcet(w, k, w.items[k].wcet + data.draw(st.integers(1, 5))))

    @given(workloads)
    def test_sound_against_simulation(self, w):
        if dbf_test(w):
            assert not simulate_edf(w, 2 * w.hyperperiod()).missed

    @given(workloads)
    def test_window_count_guard(self, w):
        items = [i for i in w.items if i.wcet > 0]
        if not items:
            return
        H, windows = brute_windows(items)
        tmin = min(i.period for i in items)
        assert len(windows) <= (2 * H // tmin * len(items)) ** 2


class TestSimulator:
    def test_overload_misses_at_first_deadline(self):
        r = simulate_edf(wl((6, 0, 10, 10), (6, 0, 10, 10)), 20)
        assert r.missed and r.time == 10

    def test_empty(self):
        assert not simulate_edf(EngineWorkload(CPU, ()), 100).missed

    def test_non_preemptive_blocking_causes_miss(self):
        # the long job starts first and cannot be interrupted
        r = simulate_edf(wl((5, 1, 6, 20), (6, 0, 20, 20), engine=DLA), 40)
        assert r.missed and r.time == 6
        assert not simulate_edf(wl((5, 1, 6, 20), (6, 0, 20, 20), engine=CPU), 40).missed

    def test_offsets_delay_release(self):
        assert not simulate_edf(wl((5, 5, 10, 10), (5, 0, 5, 10)), 40).missed


class TestConditional:
    def two_branches(self):
        # nodes 1 and 2 are exclusive branches of task 0; task 1 is fixed
        items = (Item(0, 1, 6, 0, 10, 10), Item(0, 2, 2, 0, 10, 10), Item(1, 1, 5, 0, 10, 10))
        return EngineWorkload(CPU, items), {0: [frozenset({1}), frozenset({2})]}

    def test_without_scenarios_is_plain_test(self):
        w, _ = self.two_branches()
        assert bool(analyze_engine_conditional(w)) == bool(dbf_test(w))

    def test_every_scenario_must_pass(self):
        w, scen = self.two_branches()
        assert not dbf_test(w)
        assert not analyze_engine_conditional(w, scen)
        light = EngineWorkload(CPU, (w.items[0], w.items[1], Item(1, 1, 4, 0, 10, 10)))
        assert analyze_engine_conditional(light, scen)

    def test_union_used_above_limit(self):
        w, scen = self.two_branches()
        light = EngineWorkload(CPU, (w.items[0], w.items[1], Item(1, 1, 4, 0, 10, 10)))
        assert not analyze_engine_conditional(light, scen, scenario_limit=1)

    def test_envelope_never_accepts_more(self):
        rnd = random.Random(5)
        for seed in range(500):
            w = small_periods_workload(seed, preemptive=True, max_items=5)
            scen = {}
            for k in {i.task for i in w.items}:
                if rnd.random() < 0.5:
                    scen[k] = [frozenset(), frozenset({0})]
            if analyze_engine_conditional(w, scen, scenario_limit=0):
                assert analyze_engine_conditional(w, scen)
