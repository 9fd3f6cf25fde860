import os

from hypothesis import HealthCheck, settings

from hpcdag.model import Architecture, Engine, Node, NodeKind, TaskSpec

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=1000, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def sub(i, wcet, tag="CPU", p=0, cost=0):
    return Node(i, NodeKind.SUBTASK, tag, wcet, p, cost)


def struct(i, kind):
    return Node(i, kind)


def chain(*wcets, T=10, D=None, tag="CPU", tid=0):
    nodes = [sub(i + 1, c, tag) for i, c in enumerate(wcets)]
    edges = [(i + 1, i + 2) for i in range(len(wcets) - 1)]
    return TaskSpec(tid, T, T if D is None else D, nodes, edges)


def diamond(a=1, b=4, c=2, d=1, T=10, tag="CPU", tid=0):
    nodes = [sub(1, a, tag), sub(2, b, tag), sub(3, c, tag), sub(4, d, tag)]
    return TaskSpec(tid, T, T, nodes, [(1, 2), (1, 3), (2, 4), (3, 4)])


def cpus(n=8, ratio=0, preemptive=True, tag="CPU", start=0):
    return Architecture(tuple(Engine(start + i, tag, preemptive, ratio) for i in range(n)))


def branchy(kind=NodeKind.ALTERNATIVE, tags=("CPU", "CPU"), wcets=(3, 5), T=20, tid=0):
    """1 -> head 2 -> {3, 4} -> junction 5 -> 6."""
    nodes = [
        sub(1, 1),
        struct(2, kind),
        sub(3, wcets[0], tags[0]),
        sub(4, wcets[1], tags[1]),
        struct(5, NodeKind.JUNCTION),
        sub(6, 1),
    ]
    edges = [(1, 2), (2, 3), (2, 4), (3, 5), (4, 5), (5, 6)]
    return TaskSpec(tid, T, T, nodes, edges)


# Acceptance verdicts, printed at the end of the run: number -> (passed, detail).
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def report(number, passed, detail):
    ACCEPTANCE[number] = (passed, detail)
    print(f"\nACCEPTANCE {number}: {'PASS' if passed else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"ACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} - {detail}")
