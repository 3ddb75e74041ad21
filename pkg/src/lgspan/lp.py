"""Small dense exact simplex over Fractions (two-phase, Bland's rule)."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from fractions import Fraction

from .errors import InfeasibleError, UnboundedError, ValidationError

ZERO = Fraction(0)


@dataclass
class LPResult:
    x: list[Fraction]
    objective: Fraction


def _pivot(tab: list[list[Fraction]], basis: list[int], row: int, col: int) -> None:
    piv = tab[row][col]
    tab[row] = [v / piv for v in tab[row]]
    for i, other in enumerate(tab):
        if i != row and other[col] != 0:
            factor = other[col]
            tab[i] = [a - factor * b for a, b in zip(other, tab[row])]
    basis[row] = col


def _run(tab, basis, cost, allowed) -> None:
    """Minimize ``cost . x`` over the tableau; the last column is the rhs."""
    ncols = len(tab[0]) - 1
    while True:
        reduced = []
        for j in range(ncols):
            if not allowed[j]:
                reduced.append(ZERO)
                continue
            r = cost[j] - sum(cost[basis[i]] * tab[i][j] for i in range(len(tab)))
            reduced.append(r)
        entering = next((j for j in range(ncols) if reduced[j] < 0), None)
        if entering is None:
            return
        best = None
        for i, row in enumerate(tab):
            if row[entering] > 0:
                ratio = row[-1] / row[entering]
                key = (ratio, basis[i])
                if best is None or key < best[0]:
                    best = (key, i)
        if best is None:
            raise UnboundedError("linear program is unbounded below")
        _pivot(tab, basis, best[1], entering)


def solve(
    cost: Sequence,
    a_ub: Sequence[Sequence] = (),
    b_ub: Sequence = (),
    a_eq: Sequence[Sequence] = (),
    b_eq: Sequence = (),
    free: Sequence[bool] | None = None,
) -> LPResult:
    """Minimize ``cost . x`` subject to ``a_ub x <= b_ub``, ``a_eq x = b_eq``.

    Variables are nonnegative unless flagged in ``free``.  All data are
    converted to Fractions and the answer is exact.
    """
    nvar = len(cost)
    free = [False] * nvar if free is None else list(free)
    if len(free) != nvar:
        raise ValidationError("free flags must match the number of variables")
    for row in list(a_ub) + list(a_eq):
        if len(row) != nvar:
            raise ValidationError("constraint row length differs from variable count")

    # column layout: split vars, slacks, artificials
    cols = []
    for j in range(nvar):
        cols.append((j, 1))
        if free[j]:
            cols.append((j, -1))
    nsplit = len(cols)
    n_ub, n_eq = len(a_ub), len(a_eq)
    nrows = n_ub + n_eq
    width = nsplit + n_ub + nrows

    tab = []
    for i in range(nrows):
        src, rhs = (a_ub[i], b_ub[i]) if i < n_ub else (a_eq[i - n_ub], b_eq[i - n_ub])
        row = [Fraction(src[j]) * sign for j, sign in cols]
        row += [Fraction(1 if k == i else 0) for k in range(n_ub)]
        rhs = Fraction(rhs)
        if rhs < 0:
            row = [-v for v in row]
            rhs = -rhs
        row += [Fraction(1 if k == i else 0) for k in range(nrows)]
        row.append(rhs)
        tab.append(row)
    basis = [nsplit + n_ub + i for i in range(nrows)]

    phase1 = [ZERO] * (nsplit + n_ub) + [Fraction(1)] * nrows
    _run(tab, basis, phase1, [True] * width)
    if sum(tab[i][-1] for i in range(nrows) if basis[i] >= nsplit + n_ub) != 0:
        raise InfeasibleError("linear program has no feasible point")

    # drive zero-level artificials out of the basis; drop redundant rows
    i = 0
    while i < len(tab):
        if basis[i] >= nsplit + n_ub:
            col = next((j for j in range(nsplit + n_ub) if tab[i][j] != 0), None)
            if col is None:
                del tab[i]
                del basis[i]
                continue
            _pivot(tab, basis, i, col)
        i += 1

    phase2 = [Fraction(cost[j]) * sign for j, sign in cols] + [ZERO] * (n_ub + nrows)
    allowed = [True] * (nsplit + n_ub) + [False] * nrows
    _run(tab, basis, phase2, allowed)

    split = [ZERO] * width
    for i, b in enumerate(basis):
        split[b] = tab[i][-1]
    x = [ZERO] * nvar
    for k, (j, sign) in enumerate(cols):
        x[j] += sign * split[k]
    objective = sum((Fraction(c) * v for c, v in zip(cost, x)), ZERO)
    return LPResult(x, objective)
