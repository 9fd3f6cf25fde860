"""Utilization sweeps over random task sets, written out as .dat tables."""

from __future__ import annotations

import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

from .alloc import AllocParams, AllocResult, allocate_taskset, verify_allocation
from .expand import derive_cpdag
from .gen import GenConfig, InfeasibleTarget, derive_seed, gen_taskset
from .model import Architecture, Engine, Tag
from .timing import CostBasis, PreemptionScheme

# Column order of every .dat file after the index column.
HEURISTICS = ("BOP-P", "BOF-P", "BRP-P", "BRF-P", "WOP-P", "WOF-P", "WRP-P", "WRF-P", "BOF-R", "BRF-R")
CP_DAG = "CP-DAG"
CP_HEURISTIC = "BRF-P"

ACCELERATORS = ("dGPU", "iGPU", "DLA", "PVA")
RATIOS: Mapping[Tag, Fraction] = {
    "CPU": Fraction(2, 10000),
    "dGPU": Fraction(3, 10),
    "iGPU": Fraction(3, 10),
    "DLA": Fraction(1, 10),
    "PVA": Fraction(1, 10),
}


def _platform(counts: Mapping[Tag, int], ratios: Mapping[Tag, Fraction]) -> Architecture:
    engines = []
    for tag in ("CPU",) + ACCELERATORS:
        for _ in range(counts[tag]):
            # DLA and PVA cannot be preempted, but long jobs are split into
            # chunks; the chunking overhead is modelled as a preemption cost.
            engines.append(Engine(len(engines), tag, True, Fraction(ratios.get(tag, 0))))
    return Architecture(tuple(engines))


def xavier(ratios: Mapping[Tag, Fraction] = RATIOS) -> Architecture:
    """8 CPU cores and one engine per accelerator kind."""
    return _platform({"CPU": 8, "dGPU": 1, "iGPU": 1, "DLA": 1, "PVA": 1}, ratios)


def pegasus(ratios: Mapping[Tag, Fraction] = RATIOS) -> Architecture:
    """8 CPU cores and two engines per accelerator kind."""
    return _platform({"CPU": 8, "dGPU": 2, "iGPU": 2, "DLA": 2, "PVA": 2}, ratios)


PRESETS = {"xavier": xavier, "pegasus": pegasus}


@dataclass(frozen=True)
class SweepConfig:
    preset: str = "xavier"
    steps: int = 16
    runs: int = 85
    heuristics: tuple[str, ...] = HEURISTICS
    cp_dag: bool = True
    scheme: PreemptionScheme = PreemptionScheme.REDUCED_PREM
    cost_basis: CostBasis = CostBasis.PREEMPTING
    ratios: Mapping[Tag, Fraction] = field(default_factory=lambda: dict(RATIOS))
    base_seed: int = 0
    indices: tuple[int, ...] | None = None
    gen: GenConfig = field(default_factory=GenConfig)
    workers: int = 1
    verify_every: int = 100

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}")
        if self.steps < 1 or self.runs < 0:
            raise ValueError("steps must be positive and runs non-negative")
        for h in self.heuristics:
            AllocParams.from_name(h)
        object.__setattr__(self, "scheme", PreemptionScheme(self.scheme))
        object.__setattr__(self, "cost_basis", CostBasis(self.cost_basis))

    @property
    def arch(self) -> Architecture:
        return PRESETS[self.preset]({t: Fraction(r) for t, r in self.ratios.items()})

    @property
    def index_list(self) -> tuple[int, ...]:
        return self.indices if self.indices is not None else tuple(range(self.steps))

    def step(self, tag: Tag) -> Fraction:
        """Per-index utilization increment; ``steps`` increments reach the engine count."""
        return Fraction(self.arch.count(tag), self.steps)

    def targets(self, index: int) -> dict[Tag, float]:
        return {t: float(index * self.step(t)) for t in self.arch.tags}

    @property
    def columns(self) -> tuple[str, ...]:
        return self.heuristics + ((CP_DAG,) if self.cp_dag else ())


@dataclass(frozen=True)
class RunOutcome:
    success: bool
    active_cpus: int = 0
    active_util: float = 0.0
    verified: bool | None = None  # None when the run was not spot-checked
    cpu_subtasks: int = 0  # executing CPU sub-tasks placed


def run_seed(base: int, index: int, run: int) -> int:
    return base ^ derive_seed("sweep", index, run)


def _outcome(res: AllocResult, check: bool) -> RunOutcome:
    if not res.success:
        return RunOutcome(False)
    alloc = res.allocation
    active = alloc.active_engines("CPU")
    util = sum(alloc.utilization(e) for e in active) / len(active) if active else Fraction(0)
    verified = not verify_allocation(alloc) if check else None
    n_cpu = sum(1 for e in alloc.arch.engines_of("CPU") for p in alloc.engines.get(e.id, ()) if p.wcet > 0)
    return RunOutcome(True, len(active), float(util), verified, n_cpu)


def _taskset(cfg: SweepConfig, index: int, seed: int):
    gen = replace(cfg.gen, targets=cfg.targets(index), seed=seed)
    try:
        return gen_taskset(cfg.arch, gen, random.Random(seed))
    except InfeasibleTarget:
        return None


def _one_run(args: tuple[SweepConfig, int, int]) -> tuple[tuple[int, int], dict[str, RunOutcome]]:
    cfg, index, run = args
    seed = run_seed(cfg.base_seed, index, run)
    check = cfg.verify_every > 0 and seed % cfg.verify_every == 0
    arch = cfg.arch
    specs = _taskset(cfg, index, seed)
    out: dict[str, RunOutcome] = {}
    for h in cfg.columns:
        if specs is None:
            out[h] = RunOutcome(False)
            continue
        if h == CP_DAG:
            rng = random.Random(derive_seed("cp", seed))
            tasks = [derive_cpdag(s, rng) for s in specs]
            name = CP_HEURISTIC
        else:
            tasks, name = specs, h
        params = AllocParams.from_name(name, scheme=cfg.scheme, seed=seed, cost_basis=cfg.cost_basis)
        out[h] = _outcome(allocate_taskset(tasks, arch, params), check)
    return (index, run), out


@dataclass
class SweepResult:
    columns: tuple[str, ...]
    indices: tuple[int, ...]
    runs: int
    outcomes: dict[tuple[int, int], dict[str, RunOutcome]] = field(default_factory=dict)

    def _cell(self, h: str, index: int) -> list[RunOutcome]:
        return [self.outcomes[(index, r)][h] for r in range(self.runs) if (index, r) in self.outcomes]

    def rate(self, h: str, index: int) -> float:
        cell = self._cell(h, index)
        return sum(o.success for o in cell) / len(cell) if cell else 0.0

    def active_cpus(self, h: str, index: int) -> float:
        ok = [o for o in self._cell(h, index) if o.success]
        return sum(o.active_cpus for o in ok) / len(ok) if ok else 0.0

    def active_util(self, h: str, index: int) -> float:
        ok = [o for o in self._cell(h, index) if o.success]
        return sum(o.active_util for o in ok) / len(ok) if ok else 0.0

    @property
    def verify_failures(self) -> int:
        return sum(o.verified is False for runs in self.outcomes.values() for o in runs.values())


def _map(fn, jobs: list, workers: int) -> list:
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def run_sweep(cfg: SweepConfig) -> SweepResult:
    jobs = [(cfg, u, r) for u in cfg.index_list for r in range(cfg.runs)]
    result = SweepResult(cfg.columns, cfg.index_list, cfg.runs)
    for key, out in _map(_one_run, jobs, cfg.workers):
        result.outcomes[key] = out
    return result


@dataclass
class PreemptionResult:
    indices: tuple[int, ...]
    runs: int
    # (index, run) -> (success under MAX_PREEMP, success under REDUCED_PREM)
    outcomes: dict[tuple[int, int], tuple[bool, bool]] = field(default_factory=dict)

    def rates(self, index: int) -> tuple[float, float]:
        cell = [self.outcomes[(index, r)] for r in range(self.runs) if (index, r) in self.outcomes]
        if not cell:
            return 0.0, 0.0
        return sum(a for a, _ in cell) / len(cell), sum(b for _, b in cell) / len(cell)


def _preempt_run(args: tuple[SweepConfig, int, int]) -> tuple[tuple[int, int], tuple[bool, bool]]:
    cfg, index, run = args
    seed = run_seed(cfg.base_seed, index, run)
    specs = _taskset(cfg, index, seed)
    if specs is None:
        return (index, run), (False, False)
    got = []
    for scheme in (PreemptionScheme.MAX_PREEMP, PreemptionScheme.REDUCED_PREM):
        params = AllocParams.from_name("BRF-P", scheme=scheme, seed=seed, cost_basis=cfg.cost_basis)
        got.append(allocate_taskset(specs, cfg.arch, params).success)
    return (index, run), (got[0], got[1])


def run_preemption_experiment(cfg: SweepConfig) -> PreemptionResult:
    """BRF-P under both charging schemes on identical task sets."""
    jobs = [(cfg, u, r) for u in cfg.index_list for r in range(cfg.runs)]
    result = PreemptionResult(cfg.index_list, cfg.runs)
    for key, pair in _map(_preempt_run, jobs, cfg.workers):
        result.outcomes[key] = pair
    return result


# ------------------------------------------------------------------ .dat output

_AXIS = "# x: utilization index i; per-tag target = i * engines / steps"


def _table(header: Sequence[str], rows: Sequence[Sequence[float]], indices: Sequence[int]) -> str:
    lines = [_AXIS, "# " + " ".join(["index", *header])]
    for i, row in zip(indices, rows):
        lines.append(" ".join([str(i), *(f"{v:.6f}" for v in row)]))
    return "\n".join(lines) + "\n"


def format_dat(result: SweepResult, metric: str) -> str:
    get = {"sched_rate": result.rate, "avg_ncore": result.active_cpus, "avg_u_a": result.active_util}[metric]
    if not result.columns:
        return _table([], [], [])
    rows = [[get(h, u) for h in result.columns] for u in result.indices]
    return _table(result.columns, rows, result.indices)


def format_preemp(result: PreemptionResult) -> str:
    return _table(["MAX-PREEMP", "REDUCED-PREM"], [result.rates(u) for u in result.indices], result.indices)


def emit_dat(result: SweepResult | PreemptionResult, path: str | Path) -> list[Path]:
    """Write the .dat files for ``result`` into directory ``path``."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if isinstance(result, PreemptionResult):
        files = {"preemp.dat": format_preemp(result)}
    else:
        files = {f"{m}.dat": format_dat(result, m) for m in ("sched_rate", "avg_ncore", "avg_u_a")}
    for name, text in files.items():
        (out / name).write_text(text)
        written.append(out / name)
    return written


__all__ = [
    "CP_DAG",
    "CP_HEURISTIC",
    "HEURISTICS",
    "PRESETS",
    "PreemptionResult",
    "RATIOS",
    "RunOutcome",
    "SweepConfig",
    "SweepResult",
    "emit_dat",
    "format_dat",
    "format_preemp",
    "pegasus",
    "run_preemption_experiment",
    "run_seed",
    "run_sweep",
    "xavier",
]
