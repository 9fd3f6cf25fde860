"""Two-phase primal simplex over exact rationals.

Used where floating point is not trusted: as the LP engine of the
exhaustive oracle and as the fallback that certifies branch-and-bound
leaves. The tableau is stored as sparse row dictionaries and pivots follow
Bland's rule, so the method always terminates.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

Number = int | Fraction


@dataclass(frozen=True)
class LPResult:
    status: str  # "optimal", "infeasible" or "unbounded"
    x: tuple[Fraction, ...] = ()
    objective: Fraction | None = None


def solve_lp(
    c: Sequence[Number],
    rows: Sequence[tuple[Mapping[int, Number], str, Number]],
    lo: Sequence[Number],
    hi: Sequence[Number | None],
    maximize: bool = True,
) -> LPResult:
    """Optimise ``c . x`` subject to ``rows`` and ``lo <= x <= hi``.

    Each row is ``(coefficients, sense, rhs)`` with sense one of
    ``"<="``, ``">="`` or ``"="``. Lower bounds must be finite.
    """
    n = len(c)
    lo = [Fraction(v) for v in lo]
    cons: list[tuple[dict[int, Fraction], str, Fraction]] = []
    for coef, sense, rhs in rows:
        # Shift to y = x - lo >= 0.
        shift = sum((Fraction(a) * lo[j] for j, a in coef.items()), Fraction(0))
        cons.append(({j: Fraction(a) for j, a in coef.items() if a}, sense, Fraction(rhs) - shift))
    for j, h in enumerate(hi):
        if h is not None:
            cons.append(({j: Fraction(1)}, "<=", Fraction(h) - lo[j]))

    # Build the phase-one tableau in equality form with rhs >= 0.
    tab: list[dict[int, Fraction]] = []
    rhs: list[Fraction] = []
    basis: list[int] = []
    n_cols = n
    artificial: list[int] = []
    for coef, sense, b in cons:
        row = dict(coef)
        if b < 0:
            row = {j: -a for j, a in row.items()}
            b = -b
            sense = {"<=": ">=", ">=": "<=", "=": "="}[sense]
        if sense == "<=":
            row[n_cols] = Fraction(1)
            basis.append(n_cols)
            n_cols += 1
        else:
            if sense == ">=":
                row[n_cols] = Fraction(-1)
                n_cols += 1
            row[n_cols] = Fraction(1)
            basis.append(n_cols)
            artificial.append(n_cols)
            n_cols += 1
        tab.append(row)
        rhs.append(b)

    art = set(artificial)
    if art:
        # Phase one: minimise the sum of artificials, i.e. maximise -sum.
        obj = {a: Fraction(-1) for a in artificial}
        status = _run(tab, rhs, basis, obj, n_cols, forbidden=set())
        value = sum((rhs[i] for i, b in enumerate(basis) if b in art), Fraction(0))
        if status != "optimal" or value != 0:
            return LPResult("infeasible")
        _drive_out(tab, rhs, basis, art)

    sign = 1 if maximize else -1
    obj2 = {j: sign * Fraction(v) for j, v in enumerate(c) if v}
    status = _run(tab, rhs, basis, obj2, n_cols, forbidden=art)
    if status == "unbounded":
        return LPResult("unbounded")
    y = [Fraction(0)] * n_cols
    for i, b in enumerate(basis):
        y[b] = rhs[i]
    x = tuple(lo[j] + y[j] for j in range(n))
    value = sum((Fraction(c[j]) * x[j] for j in range(n)), Fraction(0))
    return LPResult("optimal", x, value)


def _run(tab, rhs, basis, obj, n_cols, forbidden) -> str:
    """Maximise ``obj`` from the current basis with Bland's rule."""
    while True:
        # Reduced costs: obj_j - sum over basic rows of obj_b * a_ij.
        reduced = dict(obj)
        for i, b in enumerate(basis):
            cb = obj.get(b)
            if cb:
                for j, a in tab[i].items():
                    reduced[j] = reduced.get(j, Fraction(0)) - cb * a
        in_basis = set(basis)
        entering = None
        for j in sorted(reduced):
            if reduced[j] > 0 and j not in in_basis and j not in forbidden:
                entering = j
                break
        if entering is None:
            return "optimal"
        leave = None
        best = None
        for i, row in enumerate(tab):
            a = row.get(entering)
            if a is not None and a > 0:
                ratio = rhs[i] / a
                if best is None or ratio < best or (ratio == best and basis[i] < basis[leave]):
                    best, leave = ratio, i
        if leave is None:
            return "unbounded"
        _pivot(tab, rhs, basis, leave, entering)


def _pivot(tab, rhs, basis, r, col) -> None:
    prow = tab[r]
    piv = prow[col]
    if piv != 1:
        for j in prow:
            prow[j] /= piv
        rhs[r] /= piv
    for i, row in enumerate(tab):
        if i == r:
            continue
        f = row.get(col)
        if not f:
            continue
        for j, a in prow.items():
            v = row.get(j, Fraction(0)) - f * a
            if v:
                row[j] = v
            else:
                row.pop(j, None)
        rhs[i] -= f * rhs[r]
    basis[r] = col


def _drive_out(tab, rhs, basis, art) -> None:
    # Artificials left in the basis at level zero are pivoted out when
    # possible; rows that cannot be pivoted are redundant and dropped.
    i = 0
    while i < len(tab):
        if basis[i] in art:
            col = next((j for j in sorted(tab[i]) if j not in art and tab[i][j] != 0), None)
            if col is None:
                del tab[i], rhs[i], basis[i]
                continue
            _pivot(tab, rhs, basis, i, col)
        i += 1
    for row in tab:
        for a in art:
            row.pop(a, None)


__all__ = ["LPResult", "solve_lp"]
