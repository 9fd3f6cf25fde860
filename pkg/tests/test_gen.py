import math
import random
import statistics

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hpcdag.bench import xavier
from hpcdag.expand import count_concretes
from hpcdag.gen import (
    PERIODS,
    GenConfig,
    InfeasibleTarget,
    depth,
    derive_seed,
    gen_task_graph,
    gen_taskset,
    uunifast_discard,
)
from hpcdag.model import NodeKind, hyperperiod, validate_spec


def test_uunifast_single_share():
    assert uunifast_discard(1, 0.8, random.Random(0)) == [0.8]


@given(st.integers(1, 12), st.floats(0, 1), st.integers(0, 2**32))
def test_uunifast_discard_shares(n, frac, seed):
    total = frac * n
    shares = uunifast_discard(n, total, random.Random(seed))
    assert len(shares) == n
    assert math.isclose(sum(shares), total, abs_tol=1e-9)
    assert all(0 <= s <= 1 + 1e-12 for s in shares)


def test_uunifast_full_load():
    assert uunifast_discard(3, 3.0, random.Random(0)) == [1.0, 1.0, 1.0]


def test_uunifast_four_shares_of_two():
    shares = uunifast_discard(4, 2.0, random.Random(3))
    assert all(s <= 1 for s in shares) and math.isclose(sum(shares), 2.0)


def test_uunifast_task_level_allows_large_shares():
    rng = random.Random(1)
    assert any(max(uunifast_discard(2, 3.0, rng, discard=False)) > 1 for _ in range(10))
    with pytest.raises(InfeasibleTarget):
        uunifast_discard(2, 3.0, random.Random(0))


def test_uunifast_mean_share():
    rng = random.Random(2024)
    draws = [uunifast_discard(3, 1.5, rng) for _ in range(10_000)]
    for k in range(3):
        col = [d[k] for d in draws]
        sigma = statistics.pstdev(col) / math.sqrt(len(col))
        assert abs(statistics.fmean(col) - 0.5) < 3 * sigma


def test_uunifast_rejects_bad_input():
    with pytest.raises(ValueError):
        uunifast_discard(0, 0.5, random.Random(0))
    with pytest.raises(ValueError):
        uunifast_discard(3, -1, random.Random(0))


def test_derive_seed_is_stable():
    assert derive_seed("a", 1) == derive_seed("a", 1)
    assert derive_seed("a", 1) != derive_seed("a", 2)
    assert 0 <= derive_seed("x") < 2**63


# ------------------------------------------------------------------ graphs


def test_graphs_are_valid_and_shaped():
    cfg = GenConfig()
    for seed in range(2000):
        g = gen_task_graph(random.Random(seed), cfg, seed, ("CPU", "GPU"))
        assert validate_spec(g) == []
        subs = g.subtasks
        assert 10 <= len(subs) <= 30
        assert g.period in PERIODS and g.deadline == g.period
        assert depth(g) <= max(2, cfg.depth_factor * len(subs))
        alts = sum(n.kind is NodeKind.ALTERNATIVE for n in g.nodes)
        assert alts <= cfg.max_alternatives
        assert count_concretes(g) == 2**alts <= 2**10


def test_zero_edge_probability_still_connected():
    cfg = GenConfig(edge_prob=0.0)
    for seed in range(300):
        g = gen_task_graph(random.Random(seed), cfg)
        assert validate_spec(g) == []


def test_no_branching_gives_plain_dags():
    cfg = GenConfig(branch_prob=0.0)
    g = gen_task_graph(random.Random(4), cfg)
    assert all(n.kind is NodeKind.SUBTASK for n in g.nodes)


def test_branch_kinds_are_mixed():
    cfg = GenConfig()
    kinds = set()
    for seed in range(50):
        kinds |= {n.kind for n in gen_task_graph(random.Random(seed), cfg).nodes}
    assert {NodeKind.ALTERNATIVE, NodeKind.CONDITIONAL, NodeKind.JUNCTION} <= kinds


def test_bad_config():
    with pytest.raises(ValueError):
        GenConfig(edge_prob=1.5).check()
    with pytest.raises(InfeasibleTarget):
        GenConfig(targets={"CPU": 9.0}).check(xavier())


# ------------------------------------------------------------------ task sets


def per_tag(specs):
    out, slack = {}, {}
    for s in specs:
        for n in s.subtasks:
            out[n.tag] = out.get(n.tag, 0) + n.wcet / s.period
            slack[n.tag] = slack.get(n.tag, 0) + 0.5 / s.period
    return out, slack


@pytest.mark.parametrize("seed", range(20))
def test_taskset_hits_targets(seed):
    arch = xavier()
    targets = {"CPU": 4.0, "dGPU": 0.5, "iGPU": 0.3, "DLA": 0.7, "PVA": 0.2}
    specs = gen_taskset(arch, GenConfig(targets=targets), random.Random(seed))
    assert 20 <= len(specs) <= 25
    got, slack = per_tag(specs)
    for tag, u in targets.items():
        assert abs(got.get(tag, 0) - u) <= slack.get(tag, 0) + 1e-9
    for s in specs:
        assert validate_spec(s) == []
        assert all(n.wcet <= s.period for n in s.subtasks)
    assert hyperperiod([s.period for s in specs]) <= 1_200_000


def test_zero_targets_allocate_trivially():
    from hpcdag.alloc import AllocParams, allocate_taskset

    arch = xavier()
    specs = gen_taskset(arch, GenConfig(), random.Random(0))
    assert all(n.wcet == 0 for s in specs for n in s.subtasks)
    assert allocate_taskset(specs, arch, AllocParams.from_name("BRF-P")).success


def test_determinism_and_distinct_seeds():
    arch = xavier()
    cfg = GenConfig(targets={"CPU": 2.0}, n_tasks=(2, 3))
    assert gen_taskset(arch, cfg, random.Random(9)) == gen_taskset(arch, cfg, random.Random(9))
    seen = {hash(tuple(gen_taskset(arch, cfg, random.Random(s)))) for s in range(1000)}
    assert len(seen) == 1000
