"""Dense tableau simplex for small linear programs.

Maximizes c.x subject to A.x <= b, x >= 0, with every b_i >= 0, so the
slack basis is feasible and no phase-1 pass is needed.  Exact mode runs
on rationals (gmpy2 when installed, Fraction otherwise) and returns
Fractions; float mode trades exactness for speed.

Pivoting starts with Dantzig's rule and switches to Bland's rule after a
run of degenerate pivots, which guarantees termination.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

from .errors import LpUnboundedError, NumericalFailureError

try:
    from gmpy2 import mpq as _rational
except ImportError:  # pragma: no cover - gmpy2 is an optional speedup
    _rational = Fraction

_FLOAT_TOL = 1e-9


def _to_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if hasattr(value, "numerator"):
        return Fraction(int(value.numerator), int(value.denominator))
    return Fraction(value)


def solve_lp_max(
    objective: Sequence,
    rows: Sequence[Sequence],
    rhs: Sequence,
    *,
    exact: bool = True,
    max_iterations: int = 20000,
) -> tuple[Fraction, list[Fraction]] | tuple[float, list[float]]:
    """Maximize objective.x with rows.x <= rhs and x >= 0.

    Returns (optimum, values).  Exact mode returns Fractions.  Raises
    LpUnboundedError when no finite optimum exists and
    NumericalFailureError when the iteration budget runs out.
    """
    n = len(objective)
    m = len(rows)
    if len(rhs) != m:
        raise ValueError("rhs length must match row count")
    for row in rows:
        if len(row) != n:
            raise ValueError("row length must match objective length")

    if exact:
        conv = _rational
        tol = 0
    else:
        conv = float
        tol = _FLOAT_TOL

    zero = conv(0)
    one = conv(1)

    tableau: list[list] = []
    for i, row in enumerate(rows):
        b_i = conv(rhs[i])
        if b_i < zero:
            raise ValueError(f"rhs[{i}] is negative; slack basis infeasible")
        line = [conv(v) for v in row]
        line.extend(one if j == i else zero for j in range(m))
        line.append(b_i)
        tableau.append(line)
    cost = [-conv(v) for v in objective]
    cost.extend(zero for _ in range(m + 1))
    basis = [n + i for i in range(m)]

    width = n + m
    use_bland = False
    degenerate_streak = 0
    max_streak = 2 * (width + 1)

    for _ in range(max_iterations):
        entering = -1
        if use_bland:
            for j in range(width):
                if cost[j] < -tol:
                    entering = j
                    break
        else:
            best = -tol
            for j in range(width):
                if cost[j] < best:
                    best = cost[j]
                    entering = j
        if entering < 0:
            values = [zero] * n
            for i, var in enumerate(basis):
                if var < n:
                    values[var] = tableau[i][-1]
            if exact:
                return _to_fraction(cost[-1]), [_to_fraction(v) for v in values]
            return float(cost[-1]), [float(v) for v in values]

        leaving = -1
        best_ratio = None
        for i in range(m):
            coeff = tableau[i][entering]
            if coeff > tol:
                ratio = tableau[i][-1] / coeff
                if (
                    best_ratio is None
                    or ratio < best_ratio
                    or (ratio == best_ratio and basis[i] < basis[leaving])
                ):
                    best_ratio = ratio
                    leaving = i
        if leaving < 0:
            raise LpUnboundedError("objective is unbounded above")

        if best_ratio == zero:
            degenerate_streak += 1
            if degenerate_streak > max_streak:
                use_bland = True
        else:
            degenerate_streak = 0

        _pivot(tableau, cost, leaving, entering)
        basis[leaving] = entering

    raise NumericalFailureError(
        f"simplex did not converge within {max_iterations} pivots"
    )


def _pivot(tableau: list[list], cost: list, row: int, col: int) -> None:
    pivot_row = tableau[row]
    pivot = pivot_row[col]
    if pivot != 1:
        inv = 1 / pivot
        pivot_row = [v * inv for v in pivot_row]
        tableau[row] = pivot_row
    for i, line in enumerate(tableau):
        if i == row:
            continue
        factor = line[col]
        if factor != 0:
            tableau[i] = [a - factor * b for a, b in zip(line, pivot_row)]
    factor = cost[col]
    if factor != 0:
        cost[:] = [a - factor * b for a, b in zip(cost, pivot_row)]
