"""Command line entry point.

Exit codes: 0 success, 1 negative verdict, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import random
import sys
from dataclasses import fields, replace
from fractions import Fraction
from pathlib import Path
from typing import Any, Sequence

from . import io
from .alloc import AllocParams, allocate_taskset, verify_allocation
from .bench import PRESETS, SweepConfig, emit_dat, run_preemption_experiment, run_sweep
from .expand import as_concrete
from .gen import GenConfig, InfeasibleTarget, gen_taskset
from .timing import CostBasis, PreemptionScheme
from .ttable import Method, build_ilp, construct_timetable, to_lp, validate_timetable

OK, FAIL, USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _targets(text: str | None) -> dict[str, float]:
    if not text:
        return {}
    out = {}
    for part in text.split(","):
        tag, sep, value = part.partition("=")
        if not sep:
            raise UsageError(f"bad target {part!r}, expected TAG=U")
        out[tag.strip()] = float(value)
    return out


def _gen_config(obj: dict[str, Any]) -> GenConfig:
    known = {f.name for f in fields(GenConfig)}
    extra = sorted(set(obj) - known)
    if extra:
        raise UsageError(f"unknown generator fields {extra}")
    kw = {k: tuple(v) if isinstance(v, list) else v for k, v in obj.items()}
    return GenConfig(**kw)


def _sweep_config(obj: dict[str, Any]) -> SweepConfig:
    known = {f.name for f in fields(SweepConfig)} - {"gen"}
    extra = sorted(set(obj) - known - {"gen", "meta"})
    if extra:
        raise UsageError(f"unknown sweep fields {extra}")
    kw = {k: v for k, v in obj.items() if k in known}
    for k in ("heuristics", "indices"):
        if k in kw and kw[k] is not None:
            kw[k] = tuple(kw[k])
    if "ratios" in kw:
        kw["ratios"] = {t: io.rational(r) for t, r in kw["ratios"].items()}
    if "gen" in obj:
        kw["gen"] = _gen_config(obj["gen"])
    return SweepConfig(**kw)


def _load_taskset(path: str):
    return io.taskset_from_json(io.read_json(path))


def _out(path: str | None, text: str) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_gen(a) -> int:
    cfg = _gen_config(io.read_json(a.config)) if a.config else GenConfig()
    if a.targets:
        cfg = replace(cfg, targets=_targets(a.targets))
    cfg = replace(cfg, seed=a.seed)
    arch = PRESETS[a.preset]()
    try:
        specs = gen_taskset(arch, cfg, random.Random(a.seed))
    except InfeasibleTarget as exc:
        raise UsageError(str(exc)) from None
    _out(a.output, io.dumps(io.taskset_to_json(specs, arch, {"seed": a.seed, "preset": a.preset})))
    return OK


def cmd_alloc(a) -> int:
    specs, arch = _load_taskset(a.taskset)
    params = AllocParams.from_name(a.heuristic, scheme=a.scheme, seed=a.seed, cost_basis=a.cost_basis)
    res = allocate_taskset(specs, arch, params)
    if not res.success:
        print(f"FAIL: {res.reason}" + (f" (task {res.failed_task})" if res.failed_task is not None else ""), file=sys.stderr)
        return FAIL
    _out(a.output, io.dumps(io.allocation_to_json(res.allocation)))
    return OK


def cmd_analyze(a) -> int:
    specs, arch = _load_taskset(a.taskset)
    alloc = io.allocation_from_json(io.read_json(a.allocation), specs, arch)
    problems = verify_allocation(alloc)
    for p in problems:
        print(p)
    print("schedulable" if not problems else "not schedulable")
    return OK if not problems else FAIL


def cmd_ttbuild(a) -> int:
    specs, arch = _load_taskset(a.taskset)
    try:
        tasks = [as_concrete(t) for t in specs]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if a.export_lp:
        Path(a.export_lp).write_text(to_lp(build_ilp(tasks, arch, a.it, a.method)))
        return OK
    res = construct_timetable(tasks, arch, a.method, a.max_it, a.solver, a.budget)
    if not res.success:
        print(f"FAIL: {res.reason}", file=sys.stderr)
        return FAIL
    _out(a.output, io.dumps(io.timetable_to_json(res.table)))
    return OK


def cmd_validate(a) -> int:
    specs, arch = _load_taskset(a.taskset)
    obj = io.read_json(a.file)
    if isinstance(obj, dict) and "reservations" in obj:
        table = io.timetable_from_json(obj)
        problems = [str(v) for v in validate_timetable(table, specs, arch, a.method)]
    else:
        problems = verify_allocation(io.allocation_from_json(obj, specs, arch))
    for p in problems:
        print(p)
    print("clean" if not problems else f"{len(problems)} violation(s)")
    return OK if not problems else FAIL


def cmd_sweep(a) -> int:
    cfg = _sweep_config(io.read_json(a.config)) if a.config else SweepConfig()
    over: dict[str, Any] = {"base_seed": a.seed}
    if a.runs is not None:
        over["runs"] = a.runs
    if a.indices:
        over["indices"] = tuple(int(x) for x in a.indices.split(","))
    if a.heuristics is not None:
        over["heuristics"] = tuple(h for h in a.heuristics.split(",") if h)
    if a.workers is not None:
        over["workers"] = a.workers
    if a.no_cp:
        over["cp_dag"] = False
    cfg = replace(cfg, **over)
    if not a.preemption_only:
        emit_dat(run_sweep(cfg), a.out)
    if a.preemption or a.preemption_only:
        emit_dat(run_preemption_experiment(cfg), a.out)
    return OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hpcdag", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True)

    def add(name: str, fn, help: str) -> argparse.ArgumentParser:
        sp = sub.add_parser(name, help=help)
        sp.add_argument("--seed", type=int, default=0)
        sp.set_defaults(fn=fn)
        return sp

    g = add("gen", cmd_gen, "generate a task set")
    g.add_argument("--config", help="JSON generator settings")
    g.add_argument("--preset", choices=sorted(PRESETS), default="xavier")
    g.add_argument("--targets", help="per-tag utilization, e.g. CPU=2,dGPU=0.5")
    g.add_argument("-o", "--output")

    al = add("alloc", cmd_alloc, "allocate a task set")
    al.add_argument("taskset")
    al.add_argument("--heuristic", default="BRF-P")
    al.add_argument("--scheme", choices=[s.value for s in PreemptionScheme], default="REDUCED_PREM")
    al.add_argument("--cost-basis", choices=[c.value for c in CostBasis], default=CostBasis.PREEMPTING.value)
    al.add_argument("-o", "--output")

    an = add("analyze", cmd_analyze, "check an allocation")
    an.add_argument("taskset")
    an.add_argument("allocation")

    tt = add("ttbuild", cmd_ttbuild, "build a time table or export its model")
    tt.add_argument("taskset")
    tt.add_argument("--method", choices=[m.value for m in Method], default="global")
    tt.add_argument("--max-it", type=int, default=4)
    tt.add_argument("--it", type=int, default=0, help="iteration of the exported model")
    tt.add_argument("--export-lp", metavar="PATH")
    tt.add_argument("--solver", choices=["builtin", "highs"], default="builtin")
    tt.add_argument("--budget", type=float, default=60.0, help="seconds per solve")
    tt.add_argument("-o", "--output")

    va = add("validate", cmd_validate, "validate a time table or an allocation")
    va.add_argument("taskset")
    va.add_argument("file")
    va.add_argument("--method", choices=[m.value for m in Method])

    sw = add("sweep", cmd_sweep, "run a utilization sweep and write .dat files")
    sw.add_argument("--config", help="JSON sweep settings")
    sw.add_argument("--out", default=".")
    sw.add_argument("--runs", type=int)
    sw.add_argument("--indices", help="comma separated utilization indices")
    sw.add_argument("--heuristics", help="comma separated heuristic names")
    sw.add_argument("--workers", type=int)
    sw.add_argument("--no-cp", action="store_true", help="skip the CP-DAG column")
    sw.add_argument("--preemption", action="store_true", help="also write preemp.dat")
    sw.add_argument("--preemption-only", action="store_true")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (UsageError, io.FormatError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
