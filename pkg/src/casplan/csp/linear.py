"""Exact rational linear arithmetic: expressions, Gaussian elimination of
equalities, and a sparse two-phase simplex with Bland's rule.

All coefficients are ``Fraction``s, so feasibility answers and optima are
exact.  Variables are free (split into nonnegative pairs internally); the
simplex reports infeasibility, unboundedness, or an optimal value with a
witness assignment.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from ..casp.lang import term_key

ZERO = Fraction(0)
ONE = Fraction(1)


@dataclass
class LinExpr:
    """``const + sum coeffs[v] * v`` with rational coefficients."""

    coeffs: dict = field(default_factory=dict)  # var name -> Fraction
    const: Fraction = ZERO

    @staticmethod
    def constant(c) -> "LinExpr":
        return LinExpr({}, Fraction(c))

    @staticmethod
    def var(name: str, coeff=ONE) -> "LinExpr":
        return LinExpr({name: Fraction(coeff)}, ZERO)

    def copy(self) -> "LinExpr":
        return LinExpr(dict(self.coeffs), self.const)

    def is_constant(self) -> bool:
        return not self.coeffs

    def vars(self):
        return self.coeffs.keys()

    def add(self, other: "LinExpr") -> "LinExpr":
        out = dict(self.coeffs)
        for v, c in other.coeffs.items():
            nc = out.get(v, ZERO) + c
            if nc == 0:
                out.pop(v, None)
            else:
                out[v] = nc
        return LinExpr(out, self.const + other.const)

    def sub(self, other: "LinExpr") -> "LinExpr":
        return self.add(other.scale(Fraction(-1)))

    def scale(self, k) -> "LinExpr":
        k = Fraction(k)
        if k == 0:
            return LinExpr({}, ZERO)
        return LinExpr({v: c * k for v, c in self.coeffs.items()}, self.const * k)

    def subst(self, var: str, rep: "LinExpr") -> "LinExpr":
        c = self.coeffs.get(var)
        if c is None:
            return self
        base = LinExpr({v: k for v, k in self.coeffs.items() if v != var},
                       self.const)
        return base.add(rep.scale(c))

    def evaluate(self, assign: dict) -> Fraction:
        total = self.const
        for v, c in self.coeffs.items():
            total += c * assign.get(v, ZERO)
        return total

    def __repr__(self) -> str:
        parts = [str(self.const)] if self.const or not self.coeffs else []
        for v in sorted(self.coeffs, key=term_key):
            parts.append("%s*%s" % (self.coeffs[v], v))
        return " + ".join(parts)


def apply_subst(e: LinExpr, subst: dict) -> LinExpr:
    """Replace every substituted variable; entries must be closed (their
    right-hand sides mention no substituted variables)."""
    out = e
    for v in list(e.coeffs):
        if v in subst:
            out = out.subst(v, subst[v])
    return out


def gaussian_eliminate(equalities: list, subst: Optional[dict] = None):
    """Eliminate ``expr = 0`` equalities into a closed substitution.

    Returns the substitution dict (var -> LinExpr over free vars) or None if
    the system is inconsistent.  An existing substitution may be passed in
    and is extended in place.
    """
    subst = {} if subst is None else subst
    for eq in equalities:
        e = apply_subst(eq, subst)
        if e.is_constant():
            if e.const != 0:
                return None
            continue
        pivot = sorted(e.coeffs, key=term_key)[0]
        c = e.coeffs[pivot]
        rest = LinExpr({v: k for v, k in e.coeffs.items() if v != pivot}, e.const)
        rep = rest.scale(Fraction(-1) / c)
        for v in list(subst):
            subst[v] = subst[v].subst(pivot, rep)
        subst[pivot] = rep
    return subst


# ---------------------------------------------------------------------------
# Simplex


INFEASIBLE = "infeasible"
OPTIMAL = "optimal"
UNBOUNDED = "unbounded"


@dataclass
class LPResult:
    status: str
    value: Optional[Fraction] = None
    assignment: dict = field(default_factory=dict)


class _Simplex:
    """Sparse dictionary simplex: rows ``sum A[i][j]*x_j = b[i]`` with
    ``x >= 0``, kept with ``b >= 0`` and a basic column per row."""

    def __init__(self):
        self.rows: list[dict] = []
        self.rhs: list[Fraction] = []
        self.basis: list[int] = []
        self.ncols = 0

    def pivot(self, r: int, e: int) -> None:
        row = self.rows[r]
        piv = row[e]
        if piv != 1:
            row = {j: a / piv for j, a in row.items()}
            self.rows[r] = row
            self.rhs[r] = self.rhs[r] / piv
        for i in range(len(self.rows)):
            if i == r:
                continue
            f = self.rows[i].get(e)
            if not f:
                continue
            tgt = self.rows[i]
            for j, a in row.items():
                na = tgt.get(j, ZERO) - f * a
                if na == 0:
                    tgt.pop(j, None)
                else:
                    tgt[j] = na
            self.rhs[i] -= f * self.rhs[r]
        self.basis[r] = e

    def minimise(self, cost: dict, forbidden=frozenset()):
        """Bland's-rule minimisation of ``sum cost[j]*x_j``.

        Returns (True, reduced_costs) at optimum or (False, None) when
        unbounded.  Columns in ``forbidden`` never enter the basis.
        """
        z = dict(cost)
        for i, b in enumerate(self.basis):
            cb = z.get(b)
            if cb:
                for j, a in self.rows[i].items():
                    nz = z.get(j, ZERO) - cb * a
                    if nz == 0:
                        z.pop(j, None)
                    else:
                        z[j] = nz
        while True:
            enter = -1
            for j in sorted(z):
                if j in forbidden:
                    continue
                if z[j] < 0:
                    enter = j
                    break
            if enter < 0:
                return True, z
            leave, best = -1, None
            for i, row in enumerate(self.rows):
                a = row.get(enter)
                if a and a > 0:
                    ratio = self.rhs[i] / a
                    if best is None or ratio < best or \
                            (ratio == best and self.basis[i] < self.basis[leave]):
                        best, leave = ratio, i
            if leave < 0:
                return False, None
            self.pivot(leave, enter)
            f = z.get(enter)
            if f:
                for j, a in self.rows[leave].items():
                    nz = z.get(j, ZERO) - f * a
                    if nz == 0:
                        z.pop(j, None)
                    else:
                        z[j] = nz

    def objective_value(self, cost: dict) -> Fraction:
        total = ZERO
        for i, b in enumerate(self.basis):
            c = cost.get(b)
            if c:
                total += c * self.rhs[i]
        return total

    def values(self) -> dict:
        out = {}
        for i, b in enumerate(self.basis):
            out[b] = self.rhs[i]
        return out


def solve_lp(ineqs: list, objective: Optional[LinExpr] = None,
             maximize: bool = True) -> LPResult:
    """Optimise over ``{x : e >= 0 for e in ineqs}`` with free variables.

    Without an objective, reports feasibility with a witness assignment.
    """
    names = sorted({v for e in ineqs for v in e.coeffs}
                   | (set(objective.coeffs) if objective is not None else set()),
                   key=term_key)
    pos = {v: 2 * i for i, v in enumerate(names)}  # v = x+ - x-
    nfree = 2 * len(names)
    sx = _Simplex()
    next_col = nfree
    art_cols = []
    for e in ineqs:
        # const + sum a v >= 0  ->  -sum a v + slack = const
        row: dict = {}
        for v, c in e.coeffs.items():
            if c:
                row[pos[v]] = row.get(pos[v], ZERO) - c
                row[pos[v] + 1] = row.get(pos[v] + 1, ZERO) + c
        rhs = e.const
        slack = next_col
        next_col += 1
        row[slack] = ONE
        if rhs >= 0:
            sx.rows.append(row)
            sx.rhs.append(rhs)
            sx.basis.append(slack)
        else:
            row = {j: -a for j, a in row.items()}
            art = next_col
            next_col += 1
            row[art] = ONE
            art_cols.append(art)
            sx.rows.append(row)
            sx.rhs.append(-rhs)
            sx.basis.append(art)
    sx.ncols = next_col

    if art_cols:
        cost1 = {a: ONE for a in art_cols}
        ok, _ = sx.minimise(cost1)
        if not ok:
            raise RuntimeError("phase-1 objective cannot be unbounded")
        if sx.objective_value(cost1) > 0:
            return LPResult(INFEASIBLE)
        for i in range(len(sx.rows)):
            if sx.basis[i] in cost1 and sx.rhs[i] == 0:
                for j in sorted(sx.rows[i]):
                    if j not in cost1 and sx.rows[i][j] != 0:
                        sx.pivot(i, j)
                        break
    forbidden = frozenset(art_cols)

    def extract() -> dict:
        vals = sx.values()
        return {v: vals.get(pos[v], ZERO) - vals.get(pos[v] + 1, ZERO)
                for v in names}

    if objective is None:
        return LPResult(OPTIMAL, None, extract())
    sense = Fraction(-1) if maximize else ONE
    cost2: dict = {}
    for v, c in objective.coeffs.items():
        if c:
            cost2[pos[v]] = cost2.get(pos[v], ZERO) + sense * c
            cost2[pos[v] + 1] = cost2.get(pos[v] + 1, ZERO) - sense * c
    ok, _ = sx.minimise(cost2, forbidden)
    if not ok:
        return LPResult(UNBOUNDED)
    assign = extract()
    return LPResult(OPTIMAL, objective.evaluate(assign), assign)
