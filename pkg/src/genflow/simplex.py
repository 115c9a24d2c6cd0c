"""Exact bounded-variable primal simplex with Bland's rule.

Solves ``min c.x  s.t.  A x = b,  lo <= x <= hi`` over ``Fraction``.  Upper
bounds may be ``None`` (unbounded above); lower bounds must be finite.  Small
dense problems only.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence


class LPError(RuntimeError):
    pass


@dataclass
class LPResult:
    status: str  # "optimal", "infeasible" or "unbounded"
    x: list | None
    objective: Fraction | None
    pivots: int


def solve_lp(c: Sequence, A: Sequence[Sequence], b: Sequence, lo: Sequence, hi: Sequence,
             basis: Sequence[int] | None = None, max_pivots: int = 100000) -> LPResult:
    """Minimize ``c.x`` subject to ``A x = b`` and bounds.

    ``basis`` optionally names one column per row forming a feasible starting
    basis when the nonbasic columns sit at their lower bounds; otherwise a
    first phase with artificial columns finds one.
    """
    m = len(A)
    nvar = len(c)
    c = [Fraction(v) for v in c]
    A = [[Fraction(v) for v in row] for row in A]
    b = [Fraction(v) for v in b]
    lo = [Fraction(v) for v in lo]
    hi = [None if v is None else Fraction(v) for v in hi]
    for j in range(nvar):
        if hi[j] is not None and hi[j] < lo[j]:
            return LPResult("infeasible", None, None, 0)

    if basis is not None:
        tab = _Tableau(A, b, lo, hi, list(basis))
        if not tab.feasible():
            raise LPError("supplied basis is not primal feasible")
        pivots = 0
    else:
        # first phase: artificial per row, sign chosen so it starts nonnegative
        resid = [b[i] - sum(A[i][j] * lo[j] for j in range(nvar)) for i in range(m)]
        A1 = [row + [Fraction(0)] * m for row in A]
        for i in range(m):
            A1[i][nvar + i] = Fraction(1) if resid[i] >= 0 else Fraction(-1)
        lo1 = lo + [Fraction(0)] * m
        hi1 = hi + [None] * m
        tab = _Tableau(A1, b, lo1, hi1, list(range(nvar, nvar + m)))
        c1 = [Fraction(0)] * nvar + [Fraction(1)] * m
        st = tab.optimize(c1, max_pivots)
        pivots = tab.pivots
        if st != "optimal":
            raise LPError("first phase did not terminate")
        if tab.objective(c1) != 0:
            return LPResult("infeasible", None, None, pivots)
        tab.drive_out_artificials(nvar)
        tab.drop_columns(nvar)
    st = tab.optimize(c, max_pivots)
    pivots = tab.pivots
    if st == "unbounded":
        return LPResult("unbounded", None, None, pivots)
    x = tab.solution()
    return LPResult("optimal", x, sum(ci * xi for ci, xi in zip(c, x)), pivots)


class _Tableau:
    """Dense tableau B^-1 A with nonbasic variables held at a bound."""

    def __init__(self, A, b, lo, hi, basis):
        self.m = len(A)
        self.n = len(lo)
        self.lo, self.hi = lo, hi
        self.T = [list(row) for row in A]
        self.rhs = list(b)
        self.basis = list(basis)
        self.at_upper = [False] * self.n
        self.pivots = 0
        for i, j in enumerate(self.basis):
            self._pivot(i, j, count=False)
        self._recompute_values()

    def _recompute_values(self):
        # x_B = B^-1 b - sum_nonbasic (B^-1 A_j) x_j ; T and rhs already hold B^-1 terms
        basic = set(self.basis)
        self.xb = list(self.rhs)
        for j in range(self.n):
            if j in basic:
                continue
            v = self.value_nonbasic(j)
            if v:
                for i in range(self.m):
                    if self.T[i][j]:
                        self.xb[i] -= self.T[i][j] * v

    def value_nonbasic(self, j):
        return self.hi[j] if self.at_upper[j] else self.lo[j]

    def feasible(self) -> bool:
        for i, j in enumerate(self.basis):
            if self.xb[i] < self.lo[j] or (self.hi[j] is not None and self.xb[i] > self.hi[j]):
                return False
        return True

    def _pivot(self, r, col, count=True):
        T = self.T
        p = T[r][col]
        if p == 0:
            raise LPError("zero pivot")
        if p != 1:
            T[r] = [v / p for v in T[r]]
            self.rhs[r] /= p
        prow = T[r]
        nz = [j for j, v in enumerate(prow) if v]
        for i in range(self.m):
            if i != r:
                fac = T[i][col]
                if fac:
                    row = T[i]
                    for j in nz:
                        row[j] -= fac * prow[j]
                    self.rhs[i] -= fac * self.rhs[r]
        self.basis[r] = col
        if count:
            self.pivots += 1

    def objective(self, c):
        return sum(c[j] * v for j, v in enumerate(self.solution()))

    def solution(self):
        x = [self.value_nonbasic(j) for j in range(self.n)]
        for i, j in enumerate(self.basis):
            x[j] = self.xb[i]
        return x

    def optimize(self, c, max_pivots) -> str:
        while self.pivots < max_pivots:
            basic = set(self.basis)
            # reduced costs d_j = c_j - c_B B^-1 A_j
            cb = [c[j] for j in self.basis]
            enter = None
            direction = 0
            for j in range(self.n):
                if j in basic:
                    continue
                d = c[j] - sum(cb[i] * self.T[i][j] for i in range(self.m) if cb[i] and self.T[i][j])
                if d < 0 and (self.hi[j] is None or not self.at_upper[j]):
                    enter, direction = j, 1
                    break
                if d > 0 and self.at_upper[j]:
                    enter, direction = j, -1
                    break
            if enter is None:
                return "optimal"
            # ratio test: x_B changes by -direction * T[:, enter] * t
            best = None
            leave = None
            leave_to_upper = False
            if self.hi[enter] is not None:
                best = self.hi[enter] - self.lo[enter]
            for i in range(self.m):
                a = self.T[i][enter] * direction
                if a == 0:
                    continue
                j = self.basis[i]
                if a > 0:
                    t = (self.xb[i] - self.lo[j]) / a
                    to_upper = False
                else:
                    if self.hi[j] is None:
                        continue
                    t = (self.xb[i] - self.hi[j]) / a
                    to_upper = True
                if best is None or t < best or (t == best and leave is not None and j < self.basis[leave]) \
                        or (t == best and leave is None):
                    best, leave, leave_to_upper = t, i, to_upper
            if best is None:
                return "unbounded"
            step = best * direction
            for i in range(self.m):
                if self.T[i][enter]:
                    self.xb[i] -= self.T[i][enter] * step
            if leave is None:
                # bound flip
                self.at_upper[enter] = not self.at_upper[enter]
                self.pivots += 1
                continue
            new_val = self.value_nonbasic(enter) + step
            old = self.basis[leave]
            self._pivot(leave, enter)
            self.at_upper[enter] = False
            self.at_upper[old] = leave_to_upper
            self.xb[leave] = new_val
        raise LPError("pivot limit reached")

    def drive_out_artificials(self, nvar):
        for i in range(self.m):
            if self.basis[i] >= nvar:
                for j in range(nvar):
                    if self.T[i][j] != 0 and j not in self.basis:
                        # degenerate swap: the artificial sits at zero
                        self._pivot(i, j)
                        self.at_upper[j] = False
                        break
        self._recompute_values()

    def drop_columns(self, nvar):
        keep_rows = [i for i in range(self.m) if self.basis[i] < nvar]
        self.T = [self.T[i][:nvar] for i in keep_rows]
        self.rhs = [self.rhs[i] for i in keep_rows]
        self.basis = [self.basis[i] for i in keep_rows]
        self.xb = [self.xb[i] for i in keep_rows]
        self.m = len(keep_rows)
        self.n = nvar
        self.lo, self.hi = self.lo[:nvar], self.hi[:nvar]
        self.at_upper = self.at_upper[:nvar]
