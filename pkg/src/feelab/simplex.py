"""Exact-rational simplex for small LPs in the form

    max c.x   s.t.  A x <= b,  x >= 0,  b >= 0.

All arithmetic is in fractions.Fraction, so optima, dual multipliers and
strong duality are exact.  Pivoting uses Bland's rule (smallest-index
entering and leaving variable), which cannot cycle; speed is irrelevant at
the desk scale this is meant for.

The final tableau also yields the optimal duals: with <= rows and a slack
basis start, the reduced cost under slack column i at optimality equals
the dual multiplier y_i, which satisfies A^T y >= c, y >= 0 and b.y = c.x.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence


class UnboundedError(ValueError):
    """The LP has an unbounded improving ray."""


@dataclass(frozen=True)
class LPSolution:
    value: Fraction
    x: tuple  # Fractions, one per structural variable
    duals: tuple  # Fractions, one per constraint row


def _frac(v) -> Fraction:
    return v if isinstance(v, Fraction) else Fraction(v)


def solve_lp(c: Sequence, A: Sequence[Sequence], b: Sequence) -> LPSolution:
    """Solve max c.x s.t. A x <= b, x >= 0 exactly.  Requires b >= 0."""
    m, n = len(A), len(c)
    c = [_frac(v) for v in c]
    b = [_frac(v) for v in b]
    if any(len(row) != n for row in A):
        raise ValueError("ragged constraint matrix")
    if any(bi < 0 for bi in b):
        raise ValueError("needs b >= 0 (slack basis must be feasible)")

    # tableau rows: [A | I | b]; cost row holds reduced costs, starts at -c.
    rows = [[_frac(v) for v in A[i]] + [Fraction(int(i == k)) for k in range(m)] + [b[i]]
            for i in range(m)]
    cost = [-v for v in c] + [Fraction(0)] * (m + 1)
    basis = [n + i for i in range(m)]
    total = n + m

    while True:
        enter = next((j for j in range(total) if cost[j] < 0), None)
        if enter is None:
            break
        # ratio test, Bland tie-break on the basis variable index
        leave, best = None, None
        for i in range(m):
            a = rows[i][enter]
            if a > 0:
                ratio = rows[i][total] / a
                if best is None or ratio < best or (ratio == best and basis[i] < basis[leave]):
                    leave, best = i, ratio
        if leave is None:
            raise UnboundedError(f"unbounded in direction of variable {enter}")
        piv = rows[leave][enter]
        rows[leave] = [v / piv for v in rows[leave]]
        for i in range(m):
            if i != leave and rows[i][enter]:
                f = rows[i][enter]
                rows[i] = [v - f * w for v, w in zip(rows[i], rows[leave])]
        if cost[enter]:
            f = cost[enter]
            cost = [v - f * w for v, w in zip(cost, rows[leave])]
        basis[leave] = enter

    x = [Fraction(0)] * n
    for i, bv in enumerate(basis):
        if bv < n:
            x[bv] = rows[i][total]
    duals = tuple(cost[n + i] for i in range(m))
    value = sum(ci * xi for ci, xi in zip(c, x))
    return LPSolution(value=value, x=tuple(x), duals=duals)
