"""Numeric constraint solving over the reals.

The entry point ``solve`` takes reified comparisons (over opaque variable
terms, rational constants, ``+ - * /`` and ``sqrt``) and decides them.

Pipeline: constant folding with equality-driven substitution first — pinned
durations frequently turn nonlinear contributions into linear ones — then an
exact-rational track for pure linear systems (Gaussian elimination of
equalities, a shared maximised slack for strict inequalities, disjunctive
branching for disequations, lexicographic minimisation of designated
variables for a canonical earliest witness), and an interval branch-and-prune
track when nonlinear terms survive (hull-consistency contraction, a sound
linear relaxation with interval-bounded opaque subterms for refutation, and
midpoint fixing with an exact a-posteriori check for acceptance).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from ..casp.lang import (App, Comparison, Term, is_number, render_term,
                         term_key)
from . import interval as iv
from .linear import (INFEASIBLE, OPTIMAL, UNBOUNDED, LinExpr, apply_subst,
                     gaussian_eliminate, solve_lp)

SAT = "sat"
UNSAT = "unsat"
EXHAUSTED = "resource_exhausted"

_EPS_VAR = ".eps"


class CSPError(Exception):
    pass


@dataclass
class CSPResult:
    status: str
    assignment: dict = field(default_factory=dict)  # var name -> Fraction

    def value(self, name: str) -> Fraction:
        return self.assignment.get(name, Fraction(0))


# ---------------------------------------------------------------------------
# Term -> linear conversion with opaque nonlinear subterms


def _sqrt_exact(q: Fraction) -> Optional[Fraction]:
    if q < 0:
        return None
    num = math.isqrt(q.numerator)
    den = math.isqrt(q.denominator)
    if num * num == q.numerator and den * den == q.denominator:
        return Fraction(num, den)
    return None


def _simplest_between(lo: Fraction, hi: Fraction) -> Fraction:
    """The rational with the smallest denominator (then numerator) in
    [lo, hi], by walking the continued-fraction expansion of the bounds."""
    lo, hi = Fraction(lo), Fraction(hi)
    if lo > hi:
        lo, hi = hi, lo
    fl = lo.numerator // lo.denominator
    if lo == fl:
        return lo
    if fl + 1 <= hi:
        return Fraction(fl + 1)
    return fl + 1 / _simplest_between(1 / (hi - fl), 1 / (lo - fl))


class _Conv:
    """Converts terms to LinExpr, naming maximal nonlinear subterms."""

    def __init__(self, subst: Optional[dict] = None):
        self.subst = subst or {}
        self.opaque: dict[str, Term] = {}  # fresh name -> subtree

    def _opaque_var(self, t: Term) -> LinExpr:
        name = ".nl{%s}" % render_term(t)
        self.opaque[name] = t
        return LinExpr.var(name)

    def linexpr(self, t: Term) -> LinExpr:
        if is_number(t):
            return LinExpr.constant(Fraction(t))
        if isinstance(t, App) and t.functor in "+-" and len(t.args) == 2:
            l, r = self.linexpr(t.args[0]), self.linexpr(t.args[1])
            return l.add(r) if t.functor == "+" else l.sub(r)
        if isinstance(t, App) and t.functor == "*" and len(t.args) == 2:
            l, r = self.linexpr(t.args[0]), self.linexpr(t.args[1])
            if l.is_constant():
                return r.scale(l.const)
            if r.is_constant():
                return l.scale(r.const)
            return self._opaque_var(t)
        if isinstance(t, App) and t.functor == "/" and len(t.args) == 2:
            l, r = self.linexpr(t.args[0]), self.linexpr(t.args[1])
            if r.is_constant():
                if r.const == 0:
                    raise CSPError("division by zero in %s" % render_term(t))
                return l.scale(Fraction(1) / r.const)
            return self._opaque_var(t)
        if isinstance(t, App) and t.functor == "sqrt" and len(t.args) == 1:
            arg = self.linexpr(t.args[0])
            if arg.is_constant():
                root = _sqrt_exact(arg.const)
                if root is not None:
                    return LinExpr.constant(root)
            return self._opaque_var(t)
        # opaque variable reference; eliminated variables are replaced so
        # that e.g. an end-minus-start difference cancels to a pinned duration
        name = render_term(t)
        got = self.subst.get(name)
        if got is not None:
            return got.copy()
        return LinExpr.var(name)


def _term_vars(t: Term, out: set, names: Optional[dict] = None) -> None:
    if isinstance(t, App) and (t.functor in "+-*/" or t.functor == "sqrt"):
        for a in t.args:
            _term_vars(a, out, names)
    elif not is_number(t):
        name = render_term(t)
        out.add(name)
        if names is not None:
            names[name] = t


# ---------------------------------------------------------------------------
# Interval evaluation over terms


def _ieval(t: Term, box: dict, env: dict) -> iv.Interval:
    if is_number(t):
        return iv.point(Fraction(t))
    if isinstance(t, App) and t.functor in "+-*/" and len(t.args) == 2:
        l = _ieval(t.args[0], box, env)
        r = _ieval(t.args[1], box, env)
        if t.functor == "+":
            return iv.add(l, r)
        if t.functor == "-":
            return iv.sub(l, r)
        if t.functor == "*":
            return iv.mul(l, r)
        return iv.div(l, r)
    if isinstance(t, App) and t.functor == "sqrt" and len(t.args) == 1:
        return iv.sqrt(_ieval(t.args[0], box, env))
    name = render_term(t)
    if name in env:
        return iv.point(env[name])
    return box.get(name, iv.FULL)


def _backward(t: Term, want: iv.Interval, box: dict, env: dict) -> bool:
    """Narrow variable boxes so the subtree can take a value in ``want``.
    Returns False when the constraint is proven unsatisfiable on the box."""
    cur = _ieval(t, box, env)
    cur = iv.intersect(cur, want)
    if cur.is_empty():
        return False
    if is_number(t):
        return True
    if isinstance(t, App) and t.functor in "+-*/" and len(t.args) == 2:
        a, b = t.args
        ia, ib = _ieval(a, box, env), _ieval(b, box, env)
        if t.functor == "+":
            return _backward(a, iv.sub(cur, ib), box, env) and \
                _backward(b, iv.sub(cur, _ieval(a, box, env)), box, env)
        if t.functor == "-":
            return _backward(a, iv.add(cur, ib), box, env) and \
                _backward(b, iv.sub(_ieval(a, box, env), cur), box, env)
        if t.functor == "*":
            return _backward(a, iv.div(cur, ib), box, env) and \
                _backward(b, iv.div(cur, _ieval(a, box, env)), box, env)
        # division
        return _backward(a, iv.mul(cur, ib), box, env) and \
            _backward(b, iv.div(_ieval(a, box, env), cur), box, env)
    if isinstance(t, App) and t.functor == "sqrt" and len(t.args) == 1:
        return _backward(t.args[0], iv.square(cur), box, env)
    name = render_term(t)
    if name in env:
        return True
    box[name] = iv.intersect(box.get(name, iv.FULL), cur)
    return not box[name].is_empty()


# ---------------------------------------------------------------------------
# Exact checking


def _eval_exact(t: Term, assign: dict):
    """(value, exact): Fraction when exact, float when a sqrt intervened."""
    if is_number(t):
        return Fraction(t), True
    if isinstance(t, App) and t.functor in "+-*/" and len(t.args) == 2:
        l, le = _eval_exact(t.args[0], assign)
        r, re = _eval_exact(t.args[1], assign)
        exact = le and re
        if not exact:
            l, r = float(l), float(r)
        if t.functor == "+":
            return l + r, exact
        if t.functor == "-":
            return l - r, exact
        if t.functor == "*":
            return l * r, exact
        if r == 0:
            raise CSPError("division by zero while checking %s" % render_term(t))
        return (l / r) if exact else (float(l) / float(r)), exact
    if isinstance(t, App) and t.functor == "sqrt" and len(t.args) == 1:
        arg, exact = _eval_exact(t.args[0], assign)
        if arg < 0:
            raise CSPError("square root of a negative value in %s"
                           % render_term(t))
        if exact:
            root = _sqrt_exact(Fraction(arg))
            if root is not None:
                return root, True
        return math.sqrt(float(arg)), False
    name = render_term(t)
    if name not in assign:
        raise CSPError("unassigned variable %s" % name)
    return assign[name], True


def check(comparisons, assignment: dict, tol: Fraction) -> list:
    """Comparisons violated at tolerance ``tol``.

    Non-strict bounds allow a ``tol`` overshoot; equalities a ``tol`` gap.
    Strict bounds and disequations must clear half a tolerance step, so a
    margin indistinguishable from zero at this resolution counts as violated.
    """
    tol = Fraction(tol)
    bad = []
    for c in comparisons:
        try:
            lv, le = _eval_exact(c.lhs, assignment)
            rv, re = _eval_exact(c.rhs, assignment)
        except CSPError:
            bad.append(c)
            continue
        if not (le and re):
            m = Fraction(float(lv) - float(rv))
        else:
            m = lv - rv
        ok = {"<": -m >= tol / 2, "<=": -m >= -tol, "=": abs(m) <= tol,
              "!=": abs(m) >= tol / 2, ">=": m >= -tol, ">": m >= tol / 2}[c.op]
        if not ok:
            bad.append(c)
    return bad


# ---------------------------------------------------------------------------
# Linear track


@dataclass
class _LinSys:
    eqs: list = field(default_factory=list)  # LinExpr = 0
    ineqs: list = field(default_factory=list)  # (LinExpr, strict)
    diseqs: list = field(default_factory=list)  # LinExpr != 0


def _solve_linear(sys_: _LinSys, lex_order, all_vars) -> CSPResult:
    subst = gaussian_eliminate(list(sys_.eqs))
    if subst is None:
        return CSPResult(UNSAT)

    def folded_ineqs():
        out = []
        for e, strict in sys_.ineqs:
            f = apply_subst(e, subst)
            if f.is_constant():
                if f.const < 0 or (strict and f.const == 0):
                    return None
                continue
            out.append((f, strict))
        return out

    def branch(diseqs: list) -> Optional[CSPResult]:
        if diseqs:
            d = apply_subst(diseqs[0], subst)
            rest = diseqs[1:]
            if d.is_constant():
                if d.const == 0:
                    return None
                return branch(rest)
            for sign in (Fraction(-1), Fraction(1)):
                sys2 = _LinSys(list(sys_.eqs),
                               sys_.ineqs + [(d.scale(sign), True)],
                               [])
                res = _solve_linear_core(sys2, subst, rest, lex_order, all_vars)
                if res is not None:
                    return res
            return None
        return _solve_linear_core(sys_, subst, [], lex_order, all_vars)

    return branch(list(sys_.diseqs)) or CSPResult(UNSAT)


def _solve_linear_core(sys_: _LinSys, subst, remaining_diseqs,
                       lex_order, all_vars) -> Optional[CSPResult]:
    if remaining_diseqs:
        inner = _LinSys(list(sys_.eqs), list(sys_.ineqs), list(remaining_diseqs))
        res = _solve_linear(inner, lex_order, all_vars)
        return res if res.status == SAT else None

    subst = dict(subst)
    rows = []
    strict_rows = []
    for e, strict in sys_.ineqs:
        f = apply_subst(e, subst)
        if f.is_constant():
            if f.const < 0 or (strict and f.const == 0):
                return None
            continue
        rows.append([f, strict])
        if strict:
            strict_rows.append(f)

    def lp_rows(extra=()):
        out = []
        for f, strict in rows:
            g = apply_subst(f, subst)
            if g.is_constant():
                if g.const < 0 or (strict and g.const == 0):
                    return None
                continue
            out.append((g, strict))
        return list(out) + list(extra)

    # strict inequalities: maximise one shared slack, then pin half of it
    eps_fix = None
    if strict_rows:
        cur = lp_rows()
        if cur is None:
            return None
        shifted = []
        for g, strict in cur:
            if strict:
                shifted.append(g.sub(LinExpr.var(_EPS_VAR)))
            else:
                shifted.append(g)
        shifted.append(LinExpr.var(_EPS_VAR))  # eps >= 0
        shifted.append(LinExpr.constant(1).sub(LinExpr.var(_EPS_VAR)))  # <= 1
        r = solve_lp(shifted, LinExpr.var(_EPS_VAR), maximize=True)
        if r.status == INFEASIBLE or (r.status == OPTIMAL and r.value <= 0):
            return None
        if r.status == UNBOUNDED:
            raise CSPError("slack maximisation cannot be unbounded")
        eps_fix = r.value / 2
        new_rows = []
        for f, strict in rows:
            if strict:
                new_rows.append([f.sub(LinExpr.constant(eps_fix)), False])
            else:
                new_rows.append([f, False])
        rows = new_rows

    def current_rows():
        out = []
        for f, _ in rows:
            g = apply_subst(f, subst)
            if g.is_constant():
                if g.const < 0:
                    return None
                continue
            out.append(g)
        return out

    # lexicographic minimisation for a canonical earliest witness
    for name in lex_order:
        obj = apply_subst(LinExpr.var(name), subst)
        if obj.is_constant():
            continue
        cur = current_rows()
        if cur is None:
            return None
        r = solve_lp(cur, obj, maximize=False)
        if r.status == INFEASIBLE:
            return None
        if r.status == UNBOUNDED:
            continue  # leave unpinned; caller chose not to bound it
        ext = gaussian_eliminate([obj.sub(LinExpr.constant(r.value))], subst)
        if ext is None:
            return None
        subst = ext

    cur = current_rows()
    if cur is None:
        return None
    witness = solve_lp(cur)
    if witness.status == INFEASIBLE:
        return None
    free_assign = witness.assignment
    out = {}
    for v in sorted(all_vars, key=term_key):
        if v in subst:
            out[v] = subst[v].evaluate(free_assign)
        else:
            out[v] = free_assign.get(v, Fraction(0))
    out.pop(_EPS_VAR, None)
    return CSPResult(SAT, out)


# ---------------------------------------------------------------------------
# Nonlinear track


def _solve_nonlinear(sys_: _LinSys, nonlinear, nl_vars, originals,
                     lex_order, all_vars, bounds, tol, budget) -> CSPResult:
    box: dict = {}
    lo, hi = bounds if bounds else (None, None)
    for v in sorted(all_vars, key=term_key):
        box[v] = iv.Interval(
            -iv.INF if lo is None else iv.fraction_down(Fraction(lo)),
            iv.INF if hi is None else iv.fraction_up(Fraction(hi)))

    tolf = float(tol)
    counter = {"nodes": 0}
    gave_up = {"flag": False}

    def contract(box: dict) -> bool:
        for _ in range(30):
            changed = False
            snapshot = dict(box)
            for op, lhs, rhs in nonlinear:
                diff = App("-", (lhs, rhs))
                want = {
                    ">=": iv.Interval(0.0, iv.INF),
                    ">": iv.Interval(0.0, iv.INF),
                    "<=": iv.Interval(-iv.INF, 0.0),
                    "<": iv.Interval(-iv.INF, 0.0),
                    "=": iv.Interval(-tolf, tolf),
                    "!=": iv.FULL,
                }[op]
                if not _backward(diff, want, box, {}):
                    return False
            for e, strict in sys_.ineqs:
                if not _contract_linexpr(e, box):
                    return False
            for e in sys_.eqs:
                if not _contract_linexpr(e, box, equality=True):
                    return False
            for v in box:
                old = snapshot.get(v, iv.FULL)
                if box[v].lo > old.lo + 1e-12 or box[v].hi < old.hi - 1e-12:
                    changed = True
            if not changed:
                break
        return True

    def relax_feasible(box: dict) -> bool:
        conv = _Conv()
        rows = [(e, strict) for e, strict in sys_.ineqs]
        eqs = list(sys_.eqs)
        for op, lhs, rhs in nonlinear:
            e = conv.linexpr(lhs).sub(conv.linexpr(rhs))
            if op in (">=", ">"):
                rows.append((e, False))
            elif op in ("<=", "<"):
                rows.append((e.scale(Fraction(-1)), False))
            elif op == "=":
                eqs.append(e)
            # '!=' gives no relaxation information
        extra = []
        for name, t in conv.opaque.items():
            b = _ieval(t, box, {})
            if b.is_empty():
                return False
            if b.lo != -iv.INF:
                extra.append(LinExpr.var(name).sub(
                    LinExpr.constant(Fraction(b.lo))))
            if b.hi != iv.INF:
                extra.append(LinExpr.constant(Fraction(b.hi)).sub(
                    LinExpr.var(name)))
        for v, b in box.items():
            if b.lo != -iv.INF:
                extra.append(LinExpr.var(v).sub(LinExpr.constant(Fraction(b.lo))))
            if b.hi != iv.INF:
                extra.append(LinExpr.constant(Fraction(b.hi)).sub(LinExpr.var(v)))
        ge = [e for e, _ in rows] + extra
        for e in eqs:
            ge.append(e)
            ge.append(e.scale(Fraction(-1)))
        return solve_lp(ge).status != INFEASIBLE

    def candidate(box: dict) -> Optional[CSPResult]:
        # fix each variable at the simplest rational near the box centre:
        # as robustly interior as the midpoint, but exact-arithmetic cheap
        env = {}
        for v in sorted(nl_vars, key=term_key):
            b = box[v]
            mid = Fraction(b.midpoint()).limit_denominator(10 ** 12)
            q = Fraction(b.width()).limit_denominator(10 ** 12) / 4 \
                if math.isfinite(b.width()) else Fraction(0)
            env[v] = _simplest_between(mid - q, mid + q) if q else mid
        sys2 = _LinSys(list(sys_.eqs), list(sys_.ineqs), list(sys_.diseqs))
        for v, val in env.items():
            sys2.eqs.append(LinExpr.var(v).sub(LinExpr.constant(val)))
        # nonlinear rows are relaxed guidance: the midpoint constants carry
        # interval-width error, and the exact a-posteriori check on the
        # original comparisons is what actually accepts the witness.  A row
        # whose opaque parts are pinned by the environment only carries
        # rounding slop, so it is held (nearly) exact instead of at ``tol``.
        for op, lhs, rhs in nonlinear:
            conv = _Conv()
            e = conv.linexpr(lhs).sub(conv.linexpr(rhs))
            slop = Fraction(0)
            tight = True
            for name, t in conv.opaque.items():
                b = _ieval(t, box, env)
                if b.is_empty():
                    return None
                mid = Fraction(b.midpoint()).limit_denominator(10 ** 12)
                coeff = abs(e.coeffs.get(name, Fraction(0)))
                e = e.subst(name, LinExpr.constant(mid))
                tvars: set = set()
                _term_vars(t, tvars)
                if not tvars:  # constant subterm: only rounding slop
                    w = b.width()
                    if math.isfinite(w):
                        slop += coeff * (Fraction(w) + Fraction(1, 10 ** 12))
                    else:
                        tight = False
                else:  # pinned at a heuristic midpoint: keep the tolerance
                    tight = False
            gap = slop if tight else max(tol, slop)
            margin = slop + Fraction(1, 10 ** 12) if tight else tol / 2
            slack = LinExpr.constant(gap)
            if op == ">=":
                sys2.ineqs.append((e.add(slack), False))
            elif op == ">":
                sys2.ineqs.append((e.sub(LinExpr.constant(margin)), False))
            elif op == "<=":
                sys2.ineqs.append((e.scale(Fraction(-1)).add(slack), False))
            elif op == "<":
                sys2.ineqs.append((e.scale(Fraction(-1))
                                   .sub(LinExpr.constant(margin)), False))
            elif op == "=":
                sys2.ineqs.append((e.add(slack), False))
                sys2.ineqs.append((e.scale(Fraction(-1)).add(slack), False))
            # '!=' is left to the final check
        res = _solve_linear(sys2, lex_order, all_vars)
        if res.status != SAT:
            return None
        if check(originals, res.assignment, tol):
            return None
        return res

    def rec(box: dict) -> Optional[CSPResult]:
        counter["nodes"] += 1
        if counter["nodes"] > budget:
            gave_up["flag"] = True
            return None
        box = dict(box)
        if not contract(box):
            return None
        if not relax_feasible(box):
            return None
        widest, wname = -1.0, None
        for v in sorted(nl_vars, key=term_key):
            w = box[v].width()
            if w > widest:
                widest, wname = w, v
        if wname is None or widest <= max(tolf / 10, 1e-9):
            res = candidate(box)
            if res is not None:
                return res
            gave_up["flag"] = True
            return None
        b = box[wname]
        mid = b.midpoint()
        if not math.isfinite(mid):
            gave_up["flag"] = True
            return None
        for half in (iv.Interval(b.lo, mid), iv.Interval(mid, b.hi)):
            child = dict(box)
            child[wname] = half
            res = rec(child)
            if res is not None:
                return res
            if counter["nodes"] > budget:
                return None
        return None

    res = rec(box)
    if res is not None:
        return res
    if gave_up["flag"] or counter["nodes"] > budget:
        return CSPResult(EXHAUSTED)
    return CSPResult(UNSAT)


def _contract_linexpr(e: LinExpr, box: dict, equality: bool = False) -> bool:
    """Bound propagation for ``e >= 0`` (or ``e = 0``) over the box.

    Every accumulation step rounds outward, so an emptied box is a sound
    refutation even when coefficients are not representable exactly.
    """
    total_lo, total_hi = iv.fraction_down(e.const), iv.fraction_up(e.const)
    parts = {}
    for v, c in e.coeffs.items():
        b = box.get(v, iv.FULL)
        p = iv.mul(iv.make(iv.fraction_down(c), iv.fraction_up(c)), b)
        parts[v] = (p.lo, p.hi)
        total_lo = iv.down(total_lo + p.lo) if math.isfinite(p.lo) and \
            math.isfinite(total_lo) else -iv.INF
        total_hi = iv.up(total_hi + p.hi) if math.isfinite(p.hi) and \
            math.isfinite(total_hi) else iv.INF
    if total_hi < 0.0:
        return False
    if equality and total_lo > 0.0:
        return False
    for v, c in e.coeffs.items():
        plo, phi = parts[v]
        # bounds of the row with this variable's own part removed
        rest_lo = iv.down(total_lo - plo) if math.isfinite(total_lo) and \
            math.isfinite(plo) else -iv.INF
        rest_hi = iv.up(total_hi - phi) if math.isfinite(total_hi) and \
            math.isfinite(phi) else iv.INF
        cf = float(c)
        # want: cf*v + rest >= 0  ->  cf*v >= -rest_hi  (and for an
        # equality also cf*v <= -rest_lo)
        want_lo = -rest_hi
        want_hi = iv.INF if not equality else -rest_lo
        if cf > 0:
            nb = iv.Interval(
                -iv.INF if want_lo == -iv.INF else iv.down(want_lo / cf),
                iv.INF if want_hi == iv.INF else iv.up(want_hi / cf))
        else:
            nb = iv.Interval(
                -iv.INF if want_hi == iv.INF else iv.down(want_hi / cf),
                iv.INF if want_lo == -iv.INF else iv.up(want_lo / cf))
        box[v] = iv.intersect(box.get(v, iv.FULL), nb)
        if box[v].is_empty():
            return False
    return True


# ---------------------------------------------------------------------------
# Entry point


def solve(comparisons, lex_order=(), bounds=None,
          tol: Fraction = Fraction(1, 1000),
          budget: int = 1_000_000) -> CSPResult:
    """Decide a conjunction of comparisons; see the module docstring.

    Variables are the non-numeric leaf terms; the assignment maps them back
    as given (``lex_order`` entries likewise name leaf terms).
    """
    all_vars: set = set()
    var_terms: dict = {}
    for c in comparisons:
        _term_vars(c.lhs, all_vars, var_terms)
        _term_vars(c.rhs, all_vars, var_terms)
    lex_names = [v if isinstance(v, str) else render_term(v) for v in lex_order]

    # classify with a growing substitution: substituting eliminated linear
    # equalities can make nonlinear subterms (e.g. pinned durations inside
    # products) fold to constants and move their comparisons to the linear
    # track, which may expose further equalities — iterate to stability
    subst: dict = {}
    nonlinear_count = None
    sys_ = _LinSys()
    nonlinear: list = []
    for _ in range(4):
        sys_ = _LinSys()
        nonlinear = []
        for c in comparisons:
            conv = _Conv(subst)
            le = conv.linexpr(c.lhs)
            re_ = conv.linexpr(c.rhs)
            if conv.opaque:
                nonlinear.append((c.op, c.lhs, c.rhs))
                continue
            e = le.sub(re_)
            if c.op == "=":
                sys_.eqs.append(e)
            elif c.op == "!=":
                sys_.diseqs.append(e)
            elif c.op in (">=", ">"):
                sys_.ineqs.append((e, c.op == ">"))
            else:
                sys_.ineqs.append((e.scale(Fraction(-1)), c.op == "<"))
        # re-anchor the eliminated variables so their ties survive folding
        for v, rep in subst.items():
            sys_.eqs.append(LinExpr.var(v).sub(rep))
        if len(nonlinear) == nonlinear_count:
            break
        nonlinear_count = len(nonlinear)
        new_subst = gaussian_eliminate(list(sys_.eqs))
        if new_subst is None:
            return CSPResult(UNSAT)
        subst = new_subst

    if bounds is not None:
        lo, hi = bounds
        for v in sorted(all_vars, key=term_key):
            sys_.ineqs.append((LinExpr.var(v).sub(LinExpr.constant(Fraction(lo))),
                               False))
            sys_.ineqs.append((LinExpr.constant(Fraction(hi)).sub(LinExpr.var(v)),
                               False))

    if not nonlinear:
        return _finish(_solve_linear(sys_, lex_names, all_vars), var_terms)
    # branch only on variables inside opaque subterms; everything else is
    # determined by the linear machinery once those are pinned
    nl_vars: set = set()
    for op, lhs, rhs in nonlinear:
        conv = _Conv(subst)
        conv.linexpr(lhs)
        conv.linexpr(rhs)
        for t in conv.opaque.values():
            _term_vars(t, nl_vars)
    res = _solve_nonlinear(sys_, nonlinear, nl_vars, list(comparisons),
                           lex_names, all_vars, bounds, Fraction(tol),
                           budget)
    return _finish(res, var_terms)


def _finish(res: CSPResult, var_terms: dict) -> CSPResult:
    """Re-key the witness by the caller's leaf terms, dropping helpers."""
    if not res.assignment:
        return res
    out = {var_terms[k]: v for k, v in res.assignment.items() if k in var_terms}
    return CSPResult(res.status, out)
