"""Per-engine EDF schedulability: processor-demand test and a simulator.

Jobs of an item are released at ``k*T + o`` and must finish by ``k*T + d``.
The demand test inspects every window ``(t1, t2]`` with ``t1`` a release
and ``t2`` a deadline, up to twice the engine hyperperiod.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

from .model import Engine, TaskSpec, hyperperiod

SCENARIO_LIMIT = 256
# Upper bound on (window-start, job) pairs materialised at once.
_PAIR_CHUNK = 2_000_000
_FIRST_BATCH = 64


@dataclass(frozen=True, order=True)
class Item:
    task: int
    node: int
    wcet: int
    offset: int
    deadline: int
    period: int

    @property
    def window(self) -> int:
        return self.deadline - self.offset


@dataclass(frozen=True)
class EngineWorkload:
    engine: Engine
    items: tuple[Item, ...]

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))

    def utilization(self) -> Fraction:
        return sum((Fraction(i.wcet, i.period) for i in self.items), Fraction(0))

    def hyperperiod(self) -> int:
        return hyperperiod([i.period for i in self.items]) if self.items else 1


@dataclass(frozen=True)
class Verdict:
    schedulable: bool
    witness: tuple[int, int] | None = None
    reason: str = ""

    def __bool__(self) -> bool:
        return self.schedulable


SCHEDULABLE = Verdict(True)


def dbf(workload: EngineWorkload, t1: int, t2: int) -> int:
    """Demand of jobs released at or after t1 with deadline at or before t2."""
    if not 0 <= t1 < t2:
        raise ValueError("need 0 <= t1 < t2")
    total = 0
    for it in workload.items:
        # k*T + o >= t1  and  k*T + d <= t2
        k_lo = max(0, -((it.offset - t1) // it.period))
        k_hi = (t2 - it.deadline) // it.period
        if k_hi >= k_lo:
            total += it.wcet * (k_hi - k_lo + 1)
    return total


def blocking(workload: EngineWorkload, t1: int, t2: int) -> int:
    """Non-preemptive blocking charged to window (t1, t2].

    Largest WCET among jobs released no later than t1 whose deadline lies
    beyond t2: such a job may already hold the engine when the window opens.
    """
    if workload.engine.preemptive:
        return 0
    best = 0
    for it in workload.items:
        if it.wcet == 0 or t1 < it.offset:
            continue
        k = (t1 - it.offset) // it.period
        if k * it.period + it.deadline > t2:
            best = max(best, it.wcet)
    return best


@lru_cache(maxsize=65536)
def _group_density(pattern: tuple[tuple[int, int, int], ...], period: int) -> Fraction:
    """max over windows of length <= T of demand/length for one task's items."""
    releases = sorted({o for _, o, _ in pattern})
    deadlines = sorted({d + k * period for _, _, d in pattern for k in (0, 1)})
    best = Fraction(0)
    for t1 in releases:
        for t2 in deadlines:
            if t2 <= t1 or t2 - t1 > period:
                continue
            dem = 0
            for c, o, d in pattern:
                for k in (0, 1):
                    if o + k * period >= t1 and d + k * period <= t2:
                        dem += c
            if dem:
                best = max(best, Fraction(dem, t2 - t1))
    return best


def _density_pass(items: Sequence[Item]) -> bool:
    # Sum of per-task demand densities <= 1 bounds every window's demand.
    groups: dict[tuple[int, int], list[tuple[int, int, int]]] = {}
    for it in items:
        groups.setdefault((it.task, it.period), []).append((it.wcet, it.offset, it.deadline))
    total = Fraction(0)
    for (_, period), pat in groups.items():
        total += _group_density(tuple(sorted(pat)), period)
        if total > 1:
            return False
    return True


def _overload_window(items: tuple[Item, ...], H: int, limit: int = 100_000) -> tuple[int, int]:
    """Earliest (0, t) whose demand exceeds t, given U > 1.

    Each item has at least 2H/T whole jobs in (0, 2H], so (0, 2H) always
    qualifies and is returned when the scan runs past ``limit`` deadlines.
    """
    heap = [(i.deadline, k) for k, i in enumerate(items)]
    heapq.heapify(heap)
    demand = 0
    for _ in range(limit):
        t = heap[0][0]
        while heap[0][0] == t:
            _, k = heapq.heappop(heap)
            demand += items[k].wcet
            heapq.heappush(heap, (t + items[k].period, k))
        if demand > t:
            return (0, t)
    return (0, 2 * H)


def dbf_test(workload: EngineWorkload) -> Verdict:
    return _dbf_test(workload.engine, tuple(sorted(i for i in workload.items if i.wcet > 0)))


@lru_cache(maxsize=32768)
def _dbf_test(engine: Engine, items: tuple[Item, ...]) -> Verdict:
    workload = EngineWorkload(engine, items)
    if not items:
        return SCHEDULABLE
    for it in items:
        if it.offset < 0 or it.wcet > it.deadline - it.offset:
            return Verdict(False, (it.offset, it.deadline), "window shorter than WCET")
    util = sum((Fraction(i.wcet, i.period) for i in items), Fraction(0))
    H = hyperperiod([i.period for i in items])
    preemptive = workload.engine.preemptive
    if util > 1:
        return Verdict(False, _overload_window(items, H), "utilization above 1")
    if preemptive and (_density_pass(items) or _sporadic_pass(items, util)):
        return SCHEDULABLE
    return _exact_windows(items, preemptive, util, H)


def _sporadic_pass(items: Sequence[Item], util: Fraction) -> bool:
    """Offset-aware demand test by quick processor-demand analysis.

    All tasks release together, so items whose periods divide a common
    cluster period keep a fixed alignment: they are unrolled into one
    pattern over that period. Different clusters are aligned in the worst
    way. The resulting bound h(L) dominates the demand of every window of
    length L, so passing here implies every window passes. Only decisive
    when utilization is below 1.
    """
    if util >= 1:
        return False
    packed = []
    for period, pat in _harmonic_clusters(items):
        starts = sorted({o for _, o, _ in pat})
        steps = sorted({(d - o2) % period or period for _, _, d in pat for o2 in starts} | {d - o for _, o, d in pat})
        packed.append((period, pat, starts, steps))
    slack = sum((Fraction(i.wcet * (i.period - i.window), i.period) for i in items), Fraction(0))
    limit = max(max(i.window for i in items), math.ceil(slack / (1 - util)))
    d_min = min(i.window for i in items)

    # One row per (cluster, release) and one column per job; jobs of other
    # clusters are masked out, so a window's demand is a masked row sum.
    rows_t1, rows_p, heads, cols, mask_blocks = [], [], [], [], []
    ncols = sum(len(pat) for _, pat, _, _ in packed)
    col0 = 0
    for period, pat, starts, _ in packed:
        heads.append(len(rows_t1))
        for t1 in starts:
            rows_t1.append(t1)
            rows_p.append(period)
            m = np.zeros(ncols, dtype=bool)
            m[col0 : col0 + len(pat)] = True
            mask_blocks.append(m)
        cols.extend(pat)
        col0 += len(pat)
    t1v = np.array(rows_t1, dtype=np.int64)[:, None]
    pv = np.array(rows_p, dtype=np.int64)[:, None]
    cv = np.array([c for c, _, _ in cols], dtype=np.int64)
    ov = np.array([o for _, o, _ in cols], dtype=np.int64)
    dv = np.array([d for _, _, d in cols], dtype=np.int64)
    base = t1v - dv[None, :]
    extra = (ov[None, :] - t1v) // pv + 1
    weight = np.where(np.array(mask_blocks), cv[None, :], 0)
    heads_v = np.array(heads, dtype=np.intp)

    def demand(length: int) -> int:
        n = np.maximum((base + length) // pv + extra, 0)
        got = (n * weight).sum(axis=1)
        return int(np.maximum.reduceat(got, heads_v).sum())

    def last_step(t: int) -> int | None:
        # Largest point below t where some group's demand may grow.
        best = None
        for period, _, _, steps in packed:
            for s0 in steps:
                if s0 < t:
                    v = (t - s0 - 1) // period * period + s0
                    best = v if best is None or v > best else best
        return best

    t = last_step(limit + 1)
    while t is not None:
        h = demand(t)
        if h > t:
            return False
        if h <= d_min:
            return True
        t = h if h < t else last_step(t)
    return True


_CLUSTER_JOBS = 24


def _harmonic_clusters(items: Sequence[Item]) -> list[tuple[int, list[tuple[int, int, int]]]]:
    """Group items into (period, jobs) patterns with fixed relative alignment.

    A period joins an existing cluster whose period divides it when the
    unrolled pattern stays small; each job is (wcet, release, deadline)
    within one cluster period.
    """
    by_period: dict[int, list[tuple[int, int, int]]] = {}
    for i in items:
        by_period.setdefault(i.period, []).append((i.wcet, i.offset, i.deadline))
    clusters: list[tuple[int, list[tuple[int, int, int]]]] = []
    for period in sorted(by_period):
        own = by_period[period]
        best = None
        for n, (cp, jobs) in enumerate(clusters):
            size = len(jobs) * (period // cp) + len(own)
            if period % cp == 0 and size <= _CLUSTER_JOBS and (best is None or size < best[1]):
                best = (n, size)
        if best is None:
            clusters.append((period, list(own)))
            continue
        cp, jobs = clusters[best[0]]
        unrolled = [(c, o + j * cp, d + j * cp) for j in range(period // cp) for c, o, d in jobs]
        clusters[best[0]] = (period, unrolled + own)
    return clusters


def _exact_windows(items: Sequence[Item], preemptive: bool, util: Fraction, H: int) -> Verdict:
    """Check every window (t1, t2] with t1 a release below H, t2 a deadline.

    With P(t) the cost of jobs due by t, the demand of a window is
    P(t2) - P(t1) minus the cost of jobs straddling t1 that are due by t2.
    For a fixed t1 the straddling cost and the blocking term only change at
    deadlines of jobs alive at t1, so each t1 needs at most n + 1 range
    maxima of P(t2) - t2.
    """
    horizon = 2 * H
    bmax = 0 if preemptive else max(i.wcet for i in items)
    # Windows longer than this always satisfy the demand condition.
    if util < 1:
        excess = sum((Fraction(i.wcet * (i.period - i.window), i.period) for i in items), Fraction(0))
        span = min(horizon, math.ceil((excess + bmax) / (1 - util)))
    else:
        span = horizon

    C = np.array([i.wcet for i in items], dtype=np.int64)
    O = np.array([i.offset for i in items], dtype=np.int64)
    D = np.array([i.deadline for i in items], dtype=np.int64)
    T = np.array([i.period for i in items], dtype=np.int64)

    counts = np.maximum(0, (horizon - D) // T + 1)
    idx = np.repeat(np.arange(len(items)), counts)
    k = np.arange(idx.size) - np.repeat(np.cumsum(counts) - counts, counts)
    rel = k * T[idx] + O[idx]
    ddl = k * T[idx] + D[idx]
    cost = C[idx]

    order = np.argsort(ddl, kind="stable")
    dl_sorted = ddl[order]
    due = np.cumsum(cost[order])
    # Unique deadlines and P at each of them.
    last = np.r_[dl_sorted[1:] != dl_sorted[:-1], True]
    dl_u = dl_sorted[last]
    p_u = due[last]
    table = _SparseMax(p_u - dl_u)

    # Earliest deadline among jobs released at or after each release time.
    by_rel = np.argsort(rel, kind="stable")
    rel_sorted = rel[by_rel]
    suffix_min = np.minimum.accumulate(ddl[by_rel][::-1])[::-1]

    starts = np.unique(rel[rel < H])
    step = max(1, _PAIR_CHUNK // (len(items) + 1))
    # Violations tend to show up early; a short first batch exits fast.
    bounds = [0, min(_FIRST_BATCH, starts.size)]
    while bounds[-1] < starts.size:
        bounds.append(min(bounds[-1] + step, starts.size))
    for a, b in zip(bounds, bounds[1:]):
        verdict = _check_starts(
            starts[a:b], C, O, D, T, dl_u, p_u, table, rel_sorted, suffix_min, span, horizon, preemptive
        )
        if verdict is not None:
            return verdict
    return SCHEDULABLE


class _SparseMax:
    """Range-maximum table over a fixed integer array."""

    def __init__(self, values: np.ndarray):
        self.levels = [values]
        width = 1
        while 2 * width <= values.size:
            prev = self.levels[-1]
            self.levels.append(np.maximum(prev[:-width], prev[width:]))
            width *= 2

    def query(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """Max over inclusive index ranges; empty ranges give a huge negative."""
        n = np.maximum(hi - lo + 1, 1)
        lvl = np.floor(np.log2(n)).astype(np.int64)
        out = np.full(lo.shape, np.iinfo(np.int64).min // 4, dtype=np.int64)
        ok = hi >= lo
        for k in np.unique(lvl[ok]):
            sel = ok & (lvl == k)
            arr = self.levels[k]
            out[sel] = np.maximum(arr[lo[sel]], arr[hi[sel] - (1 << int(k)) + 1])
        return out


def _check_starts(t1, C, O, D, T, dl_u, p_u, table, rel_sorted, suffix_min, span, horizon, preemptive):
    n = C.size
    # Job of each item alive at t1 (released at or before t1, due after it).
    kk = (t1[:, None] - O[None, :]) // T[None, :]
    r = kk * T[None, :] + O[None, :]
    d = kk * T[None, :] + D[None, :]
    alive = (kk >= 0) & (d > t1[:, None]) & (d <= horizon)
    straddle = alive & (r < t1[:, None])
    big = np.iinfo(np.int64).max // 4
    d_alive = np.where(alive, d, big)
    order = np.argsort(d_alive, axis=1, kind="stable")
    d_ord = np.take_along_axis(d_alive, order, axis=1)
    c_ord = np.broadcast_to(C, d_alive.shape)
    c_ord = np.take_along_axis(c_ord, order, axis=1)
    s_ord = np.take_along_axis(straddle, order, axis=1)
    a_ord = np.take_along_axis(alive, order, axis=1)
    # Segment q covers deadlines in [d_ord[q-1], d_ord[q]).
    s_cum = np.concatenate([np.zeros((t1.size, 1), np.int64), np.cumsum(np.where(s_ord, c_ord, 0), axis=1)], axis=1)
    if preemptive:
        b_suf = np.zeros((t1.size, n + 1), np.int64)
    else:
        live_c = np.where(a_ord, c_ord, 0)
        b_suf = np.concatenate(
            [np.maximum.accumulate(live_c[:, ::-1], axis=1)[:, ::-1], np.zeros((t1.size, 1), np.int64)], axis=1
        )
    seg_lo = np.concatenate([np.full((t1.size, 1), -big, np.int64), d_ord], axis=1)
    seg_hi = np.concatenate([d_ord - 1, np.full((t1.size, 1), big, np.int64)], axis=1)

    pos = np.searchsorted(rel_sorted, t1, side="left")
    first_due = suffix_min[pos]
    lo_t = np.maximum(first_due, t1 + 1)
    hi_t = np.minimum(t1 + span, horizon)
    lo_b = np.maximum(seg_lo, lo_t[:, None])
    hi_b = np.minimum(seg_hi, hi_t[:, None])
    lo_i = np.searchsorted(dl_u, lo_b, side="left")
    hi_i = np.searchsorted(dl_u, hi_b, side="right") - 1
    best = table.query(lo_i.ravel(), hi_i.ravel()).reshape(lo_i.shape)
    p_t1 = np.searchsorted(dl_u, t1, side="right") - 1
    base = np.where(p_t1 >= 0, p_u[np.maximum(p_t1, 0)], 0) - t1
    excess = best - base[:, None] - s_cum + b_suf
    if excess.max() <= 0:
        return None
    # Report the earliest violated window.
    row = int(np.argmax(excess.max(axis=1) > 0))
    q = int(np.argmax(excess[row] > 0))
    seg = slice(int(lo_i[row, q]), int(hi_i[row, q]) + 1)
    need = base[row] + s_cum[row, q] - b_suf[row, q]
    t2 = int(dl_u[seg][int(np.argmax(p_u[seg] - dl_u[seg] > need))])
    return Verdict(False, (int(t1[row]), t2), "demand exceeds window")


# ------------------------------------------------------------ conditionals


def analyze_engine_conditional(
    workload: EngineWorkload,
    scenarios: Mapping[int, Sequence[frozenset[int]]] | None = None,
    scenario_limit: int = SCENARIO_LIMIT,
) -> Verdict:
    """All run-time branch combinations must pass ``dbf_test``.

    ``scenarios`` maps task key to the node sets that can execute together
    (one per conditional branch vector). With more than ``scenario_limit``
    combinations the union of all branches is analysed instead, which
    dominates every single scenario.
    """
    full = dbf_test(workload)
    if full or not scenarios:
        return full
    per_task: list[list[frozenset[int]]] = []
    for task in sorted({i.task for i in workload.items}):
        on_engine = frozenset(i.node for i in workload.items if i.task == task)
        sets = scenarios.get(task)
        if not sets:
            continue
        distinct = sorted({s & on_engine for s in sets}, key=sorted)
        if len(distinct) > 1:
            per_task.append([frozenset((task, n) for n in s) for s in distinct])
    if not per_task:
        return full
    combos = math.prod(len(x) for x in per_task)
    if combos > scenario_limit:
        return full
    restricted = {(t, n) for group in per_task for s in group for (t, n) in s}
    fixed = [i for i in workload.items if (i.task, i.node) not in restricted]
    for picks in _product(per_task):
        chosen = set().union(*picks)
        items = fixed + [i for i in workload.items if (i.task, i.node) in chosen]
        verdict = dbf_test(EngineWorkload(workload.engine, tuple(items)))
        if not verdict:
            return verdict
    return SCHEDULABLE


def _product(groups):
    if not groups:
        yield ()
        return
    for head in groups[0]:
        for rest in _product(groups[1:]):
            yield (head,) + rest


def task_scenarios(tasks: Iterable[tuple[int, TaskSpec]]) -> dict[int, list[frozenset[int]]]:
    from .expand import conditional_scenarios

    out = {}
    for key, task in tasks:
        sets = conditional_scenarios(task)
        if len(sets) > 1:
            out[key] = sets
    return out


# --------------------------------------------------------------- simulator


@dataclass(frozen=True)
class MissReport:
    missed: bool
    time: int | None = None
    item: Item | None = None
    job: int | None = None


def simulate_edf(workload: EngineWorkload, horizon: int) -> MissReport:
    """Event-driven EDF on one engine over [0, horizon].

    Ties on absolute deadline go to the earlier release, then item order.
    Only jobs whose deadline falls inside the horizon can be reported.
    """
    items = [i for i in workload.items if i.wcet > 0]
    preemptive = workload.engine.preemptive
    releases: list[tuple[int, int, int]] = []  # (release, item index, job index)
    for n, it in enumerate(items):
        k = 0
        while k * it.period + it.offset < horizon:
            releases.append((k * it.period + it.offset, n, k))
            k += 1
    releases.sort()
    ready: list[list[int]] = []  # heap of [deadline, release, item, job, remaining]
    running: list[int] | None = None
    now, nxt = 0, 0
    while now <= horizon:
        while nxt < len(releases) and releases[nxt][0] <= now:
            r, n, k = releases[nxt]
            it = items[n]
            heapq.heappush(ready, [k * it.period + it.deadline, r, n, k, it.wcet])
            nxt += 1
        if running is not None and preemptive:
            heapq.heappush(ready, running)
            running = None
        if running is None and ready:
            running = heapq.heappop(ready)
        next_rel = releases[nxt][0] if nxt < len(releases) else None
        if running is None:
            if next_rel is None:
                break
            now = next_rel
            continue
        finish = now + running[4]
        until = finish if next_rel is None or not preemptive else min(finish, next_rel)
        misses = [j for j in ready if j[0] <= until]
        if running[0] < finish and running[0] <= until:
            misses.append(running)
        misses = [j for j in misses if j[0] <= horizon]
        if misses:
            j = min(misses)
            return MissReport(True, j[0], items[j[2]], j[3])
        running[4] -= until - now
        now = until
        if running[4] == 0:
            running = None
    return MissReport(False)
