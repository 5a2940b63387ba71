"""Continuous-time validation of timed plans for ground hybrid tasks.

The simulator replays a plan exactly as written: durative actions start and
end at their scheduled times, processes and events trigger themselves the
moment their conditions hold (and processes stop the moment theirs fail),
and between discrete points the numeric state evolves under the active
continuous effects.

Two continuous-effect shapes are understood.  ``(* #t R)`` with ``R`` free
of ``#t`` contributes the instantaneous rate ``R(state)`` — a genuine ODE
when ``R`` reads evolving fluents.  A ``#t``-only expression ``E(#t)`` is a
total-change profile in the time since its owner activated and contributes
the rate ``E'(tau)``.  Segments whose combined dynamics are polynomial of
low degree are integrated in closed form over exact rationals (crossing
times come out exact when they are rational); everything else runs on a
fixed-step fourth-order Runge-Kutta grid with bisection-refined crossings.

Failures are reported as :class:`Violation` records rather than exceptions;
numeric invariant breaches carry the violated comparison, the offending
time interval, and (when interval boundaries are supplied) the index of the
discretization interval the breach starts in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .pddl import model as pm
from .pddl.grounding import GroundName, GroundTask, render_ground_name

RK_STEP = 1e-3
MAX_SEGMENTS = 100000
MAX_CASCADE = 100
PROBE = Fraction(1, 10 ** 9)


class ValidationError(Exception):
    """The plan or task is malformed (as opposed to merely invalid)."""


@dataclass(frozen=True)
class PlanStep:
    """One scheduled occurrence: instantaneous if ``duration`` is None."""

    time: Fraction
    name: GroundName
    duration: Optional[Fraction] = None

    def render(self) -> str:
        dur = self.duration if self.duration is not None else Fraction(0)
        return "%.3f: %s [%.3f]" % (float(self.time),
                                    render_ground_name(self.name), float(dur))


@dataclass(frozen=True)
class Plan:
    steps: tuple
    # span end recovered from a written plan file (trace lines included);
    # used as the default goal-check horizon when none is given explicitly
    horizon: Optional[Fraction] = None

    def sorted_steps(self) -> list:
        return sorted(self.steps, key=lambda s: (s.time, s.name))


@dataclass
class Violation:
    kind: str  # invariant | precondition | goal | duration | overlap | cascade
    time: object
    end_time: object
    owner: Optional[GroundName]
    comparison: Optional[pm.Comparison]
    step: Optional[int]
    message: str


@dataclass
class Segment:
    """State evolution over [t0, t1]: exact polynomials or numeric samples."""

    t0: object
    t1: object
    polys: Optional[dict]  # fluent -> coeff tuple in absolute t (exact path)
    samples: Optional[list]  # [(t, {fluent: value}), ...] (numeric path)
    start_values: dict


@dataclass
class ValidationReport:
    ok: bool
    violations: list
    until: object
    segments: list
    final_values: dict
    final_props: set

    def value(self, fluent: pm.FluentRef, t) -> float:
        """Fluent value at time ``t`` (nearest recorded information)."""
        for seg in self.segments:
            if seg.t0 <= t <= seg.t1 or seg is self.segments[-1]:
                if t > seg.t1:
                    continue
                if seg.polys is not None:
                    p = seg.polys.get(fluent)
                    if p is None:
                        return float(seg.start_values[fluent])
                    return float(_peval_f(p, t))
                if seg.samples:
                    return _interp(seg.samples, fluent, float(t))
                return float(seg.start_values[fluent])
        if self.segments:
            last = self.segments[-1]
            if last.polys is not None and fluent in last.polys:
                return float(_peval_f(last.polys[fluent], t))
        return float(self.final_values[fluent])

    def invariant_violations(self) -> list:
        return [v for v in self.violations if v.kind == "invariant"]


# ---------------------------------------------------------------------------
# Polynomials as coefficient tuples (c0 + c1 t + c2 t^2 + ...)


def _ptrim(p: tuple) -> tuple:
    q = list(p)
    while len(q) > 1 and q[-1] == 0:
        q.pop()
    return tuple(q)


def _padd(p: tuple, q: tuple) -> tuple:
    n = max(len(p), len(q))
    return _ptrim(tuple((p[i] if i < len(p) else 0) + (q[i] if i < len(q) else 0)
                        for i in range(n)))


def _pscale(p: tuple, c) -> tuple:
    return _ptrim(tuple(c * x for x in p))


def _pmul(p: tuple, q: tuple) -> tuple:
    out = [Fraction(0)] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        for j, b in enumerate(q):
            out[i + j] += a * b
    return _ptrim(tuple(out))


def _pint(p: tuple) -> tuple:
    """Antiderivative with zero constant term."""
    return _ptrim(tuple([Fraction(0)] + [Fraction(c, 1) / (i + 1)
                                         for i, c in enumerate(p)]))


def _pcompose_shift(p: tuple, a) -> tuple:
    """p(t + a) as a polynomial in t."""
    out = (Fraction(0),)
    shift = (Fraction(a), Fraction(1))
    power = (Fraction(1),)
    for c in p:
        out = _padd(out, _pscale(power, c))
        power = _pmul(power, shift)
    return out


def _peval(p: tuple, t):
    total = Fraction(0)
    for c in reversed(p):
        total = total * t + c
    return total


def _peval_f(p: tuple, t) -> float:
    total = 0.0
    tf = float(t)
    for c in reversed(p):
        total = total * tf + float(c)
    return total


def _sqrt_fraction(x: Fraction) -> Optional[Fraction]:
    if x < 0:
        return None
    n, d = x.numerator, x.denominator
    rn, rd = math.isqrt(n), math.isqrt(d)
    if rn * rn == n and rd * rd == d:
        return Fraction(rn, rd)
    return None


def _proots(p: tuple, lo, hi) -> list:
    """Real roots of ``p`` strictly inside (lo, hi); exact when rational."""
    p = _ptrim(p)
    if len(p) == 1:
        return []
    if len(p) == 2:
        r = -Fraction(p[0]) / Fraction(p[1])
        return [r] if lo < r < hi else []
    if len(p) == 3:
        c, b, a = Fraction(p[0]), Fraction(p[1]), Fraction(p[2])
        disc = b * b - 4 * a * c
        if disc < 0:
            return []
        s = _sqrt_fraction(disc)
        if s is not None:
            roots = [(-b - s) / (2 * a), (-b + s) / (2 * a)]
        else:
            sf = math.sqrt(float(disc))
            roots = [Fraction((-float(b) - sf) / (2 * float(a))).limit_denominator(10 ** 9),
                     Fraction((-float(b) + sf) / (2 * float(a))).limit_denominator(10 ** 9)]
        return sorted(r for r in set(roots) if lo < r < hi)
    raise ValidationError("polynomial degree %d not supported" % (len(p) - 1))


# ---------------------------------------------------------------------------
# Continuous-effect shapes


def rate_shape(expr: pm.NumExpr):
    """('state', R) for ``(* #t R)`` with #t-free R; ('elapsed', E) for a
    fluent-free profile E(#t)."""
    if isinstance(expr, pm.NumOp) and expr.op == "*":
        for a, b in ((expr.lhs, expr.rhs), (expr.rhs, expr.lhs)):
            if isinstance(a, pm.TimeVar) and not pm.expr_has_time(b):
                return ("state", b)
    if not pm.expr_fluents(expr):
        return ("elapsed", expr)
    raise ValidationError(
        "unsupported continuous effect shape: %s (expected (* #t R) with "
        "#t-free R, or a #t-only profile)" % pm.render_expr(expr))


def _time_poly(expr: pm.NumExpr) -> Optional[tuple]:
    """Polynomial coefficients of a #t-only expression, or None."""
    if isinstance(expr, Fraction):
        return (expr,)
    if isinstance(expr, pm.TimeVar):
        return (Fraction(0), Fraction(1))
    if isinstance(expr, pm.NumOp):
        l, r = _time_poly(expr.lhs), _time_poly(expr.rhs)
        if l is None or r is None:
            return None
        if expr.op == "+":
            return _padd(l, r)
        if expr.op == "-":
            return _padd(l, _pscale(r, Fraction(-1)))
        if expr.op == "*":
            return _pmul(l, r)
        if expr.op == "/" and len(r) == 1:
            if r[0] == 0:
                return None
            return _pscale(l, Fraction(1) / Fraction(r[0]))
        return None
    return None


# ---------------------------------------------------------------------------
# Simulator state


@dataclass
class _State:
    values: dict
    props: set
    processes: dict = field(default_factory=dict)  # gname -> activation time
    durative: dict = field(default_factory=dict)  # gname -> (start, end)
    stopped_at: dict = field(default_factory=dict)  # gname -> deactivation time

    def lookup(self, f: pm.FluentRef):
        try:
            return self.values[f]
        except KeyError:
            raise ValidationError("uninitialised fluent %s" % (f,))


def _lit_true(lit: pm.Literal, state: _State) -> bool:
    return (lit.prop in state.props) == lit.positive


def _margin(c: pm.Comparison, state: _State):
    return pm.eval_expr(c.lhs, state.lookup, None) - \
        pm.eval_expr(c.rhs, state.lookup, None)


def _comparison_holds(c: pm.Comparison, state: _State, eps) -> bool:
    m = _margin(c, state)
    return _op_holds(c.op, m, eps)


def _op_holds(op: str, m, eps) -> bool:
    return {"<": -m >= eps / 2, "<=": -m >= -eps, "=": abs(m) <= eps,
            "!=": abs(m) >= eps / 2, ">=": m >= -eps, ">": m >= eps / 2}[op]


def _op_true_exact(op: str, m) -> bool:
    """Strict comparison truth used for self-triggering; float margins are
    snapped to zero within one part in 10^9 to absorb integration error."""
    if isinstance(m, float) and abs(m) < 1e-9:
        m = 0
    return {"<": m < 0, "<=": m <= 0, "=": m == 0, "!=": m != 0,
            ">=": m >= 0, ">": m > 0}[op]


def _condition_ok(cond, state: _State, eps) -> Optional[object]:
    """None if the conjunction holds, else the first failing part."""
    for part in cond:
        if isinstance(part, pm.Literal):
            if not _lit_true(part, state):
                return part
        else:
            if not _comparison_holds(part, state, eps):
                return part
    return None


def _apply_instant(eff: pm.InstantEffect, state: _State) -> None:
    for l in eff.lits:
        if not l.positive:
            state.props.discard(l.prop)
    for l in eff.lits:
        if l.positive:
            state.props.add(l.prop)
    updates = {}
    for a in eff.assigns:
        val = pm.eval_expr(a.expr, state.lookup, None)
        if a.kind == "assign":
            updates[a.fluent] = val
        elif a.kind == "increase":
            updates[a.fluent] = state.lookup(a.fluent) + val
        else:
            updates[a.fluent] = state.lookup(a.fluent) - val
    state.values.update(updates)


# ---------------------------------------------------------------------------
# The validator


class _Sim:
    def __init__(self, task: GroundTask, eps):
        self.task = task
        self.eps = Fraction(eps)
        self.violations: list = []
        self.segments: list = []
        init_vals = dict(task.init_values)
        self.state = _State(values=init_vals, props=set(task.init_true))

    # -- discrete machinery ----------------------------------------------

    def fail(self, kind, t0, t1, owner, comparison, message) -> None:
        self.violations.append(Violation(kind, t0, t1, owner, comparison,
                                         None, message))

    def check_condition(self, cond, t, owner, what) -> None:
        bad = self._condition_failure(cond, t)
        if bad is not None:
            cmpr = bad if isinstance(bad, pm.Comparison) else None
            self.fail("precondition", t, t, owner, cmpr,
                      "%s of %s not satisfied at %s: %s" %
                      (what, render_ground_name(owner), _fmt_time(t),
                       _fmt_part(bad)))

    def _condition_failure(self, cond, t):
        return _condition_ok(cond, self.state, self.eps)

    def cascade(self, t) -> None:
        """Self-triggering: fire due events, flip due processes."""
        for _ in range(MAX_CASCADE):
            changed = False
            for gn in sorted(self.task.events, key=repr):
                ev = self.task.events[gn]
                if self._event_due(ev):
                    _apply_instant(ev.effect, self.state)
                    changed = True
                    if self._event_due(ev):
                        self.fail("cascade", t, t, gn, None,
                                  "event %s does not falsify its own "
                                  "condition" % render_ground_name(gn))
                        return
            for gn in sorted(self.task.processes, key=repr):
                pr = self.task.processes[gn]
                active = gn in self.state.processes
                strict = not active and self.state.stopped_at.get(gn) == t
                due = self._process_should_run(gn, pr, t, strict)
                if active and not due:
                    del self.state.processes[gn]
                    self.state.stopped_at[gn] = t
                    changed = True
                elif not active and due:
                    self.state.processes[gn] = t
                    self.state.stopped_at.pop(gn, None)
                    changed = True
            if not changed:
                return
        self.fail("cascade", t, t, None, None,
                  "no fixpoint after %d trigger rounds" % MAX_CASCADE)

    def _event_due(self, ev: pm.Event) -> bool:
        for part in ev.precond:
            if isinstance(part, pm.Literal):
                if not _lit_true(part, self.state):
                    return False
            elif not _op_true_exact(part.op, _margin(part, self.state)):
                return False
        return True

    def _process_should_run(self, gn, pr: pm.Process, t, strict) -> bool:
        """Condition truth a moment after ``t`` with the process running.

        Judging the condition under the process's own drift makes boundary
        states stable: a drain whose level sits exactly at zero neither
        restarts (its drift would leave the condition false) nor chatters.
        After a stop at ``t`` itself, re-activation demands a margin above
        eps so discretization noise cannot flip it back on.
        """
        probe = self._euler_probe(t, include=gn)

        def look(f: pm.FluentRef):
            return probe.get(f, self.state.lookup(f))

        for part in pr.precond:
            if isinstance(part, pm.Literal):
                if not _lit_true(part, self.state):
                    return False
            else:
                m = pm.eval_expr(part.lhs, look, None) - \
                    pm.eval_expr(part.rhs, look, None)
                if not _op_true_exact(part.op, m):
                    return False
                if strict and part.op in (">", ">=", "<", "<=") and \
                        abs(_margin(part, self.state)) <= self.eps:
                    return False
        return True

    def _euler_probe(self, t, include=None) -> dict:
        """Fluent values one infinitesimal step past ``t`` (first order)."""
        effects = self.active_effects()
        if include is not None and include not in self.state.processes:
            for eff in self.task.processes[include].effects:
                shape, payload = rate_shape(eff.expr)
                effects.append((include, t, eff.kind, eff.fluent, shape,
                                payload))
        vals = dict(self.state.values)
        for owner, t_act, kind, fluent, shape, payload in effects:
            if shape == "state":
                rate = pm.eval_expr(payload, self.state.lookup, None)
            else:
                rate = pm.eval_expr(pm.diff_time(payload), self.state.lookup,
                                    Fraction(t) - Fraction(t_act))
            sign = 1 if kind == "increase" else -1
            vals[fluent] = vals[fluent] + PROBE * rate * sign
        return vals

    # -- continuous machinery --------------------------------------------

    def active_effects(self):
        """[(owner, activation time, kind, fluent, shape, payload)]"""
        out = []
        for gn in sorted(self.state.processes, key=repr):
            t_act = self.state.processes[gn]
            for eff in self.task.processes[gn].effects:
                shape, payload = rate_shape(eff.expr)
                out.append((gn, t_act, eff.kind, eff.fluent, shape, payload))
        for gn in sorted(self.state.durative, key=repr):
            t_act = self.state.durative[gn][0]
            for eff in self.task.durative_actions[gn].eff_cont:
                shape, payload = rate_shape(eff.expr)
                out.append((gn, t_act, eff.kind, eff.fluent, shape, payload))
        return out

    def monitored_invariants(self):
        """[(owner, comparison)] that must hold throughout the segment."""
        out = []
        for gn in sorted(self.state.durative, key=repr):
            d = self.task.durative_actions[gn]
            for part in d.cond_over:
                if isinstance(part, pm.Comparison):
                    out.append((gn, part))
        return out

    def trigger_comparisons(self):
        """Comparisons whose flips must cut the segment."""
        out = []
        for gn in sorted(self.task.processes, key=repr):
            for part in self.task.processes[gn].precond:
                if isinstance(part, pm.Comparison):
                    out.append(part)
        for gn in sorted(self.task.events, key=repr):
            for part in self.task.events[gn].precond:
                if isinstance(part, pm.Comparison):
                    out.append(part)
        return out

    def run_segment(self, t0, t1):
        """Evolve from t0 to at most t1; returns the reached time."""
        effects = self.active_effects()
        evolving = sorted({e[3] for e in effects}, key=repr)
        if not effects:
            self.segments.append(Segment(t0, t1, {}, None,
                                         dict(self.state.values)))
            return t1
        rates = self._exact_rates(effects, evolving, t0)
        if rates is not None:
            return self._segment_exact(t0, t1, evolving, rates)
        return self._segment_numeric(t0, t1, evolving, effects)

    def _exact_rates(self, effects, evolving, t0):
        """fluent -> rate polynomial in absolute t, or None if not exact."""
        if any(not isinstance(v, Fraction)
               for v in self.state.values.values()):
            return None
        rates = {f: (Fraction(0),) for f in evolving}
        evolving_set = set(evolving)
        for owner, t_act, kind, fluent, shape, payload in effects:
            if shape == "state":
                if pm.expr_fluents(payload) & evolving_set:
                    return None
                val = pm.eval_expr(payload, self.state.lookup, None)
                poly = (Fraction(val),)
            else:
                prof = _time_poly(pm.diff_time(payload))
                if prof is None:
                    return None
                poly = _pcompose_shift(prof, Fraction(t_act) * -1)
            if len(poly) > 2:
                return None  # keep trajectories at degree <= 2
            sign = Fraction(1) if kind == "increase" else Fraction(-1)
            rates[fluent] = _padd(rates[fluent], _pscale(poly, sign))
        return rates

    def _segment_exact(self, t0, t1, evolving, rates):
        trajs = {}
        for f in evolving:
            anti = _pint(rates[f])
            base = self.state.lookup(f) - _peval(anti, Fraction(t0))
            trajs[f] = _padd(anti, (base,))

        def as_poly(c: pm.Comparison) -> Optional[tuple]:
            return self._comparison_poly(c, trajs)

        # earliest trigger flip cuts the segment
        cut = None
        for c in self.trigger_comparisons():
            p = as_poly(c)
            roots = (_proots(p, Fraction(t0), Fraction(t1))
                     if p is not None else
                     self._sampled_roots(c, trajs, t0, t1))
            for r in roots:
                if cut is None or r < cut:
                    cut = r
        t_end = cut if cut is not None else t1
        self._check_invariants_exact(t0, t_end, trajs, as_poly)
        self.segments.append(Segment(t0, t_end, trajs,
                                     None, dict(self.state.values)))
        for f in evolving:
            self.state.values[f] = _peval(trajs[f], Fraction(t_end))
        return t_end

    def _comparison_poly(self, c: pm.Comparison, trajs) -> Optional[tuple]:
        def conv(e) -> Optional[tuple]:
            if isinstance(e, Fraction):
                return (e,)
            if isinstance(e, pm.FluentRef):
                if e in trajs:
                    return trajs[e]
                return (Fraction(self.state.lookup(e)),)
            if isinstance(e, pm.TimeVar):
                return None
            l, r = conv(e.lhs), conv(e.rhs)
            if l is None or r is None:
                return None
            if e.op == "+":
                return _padd(l, r)
            if e.op == "-":
                return _padd(l, _pscale(r, Fraction(-1)))
            if e.op == "*":
                p = _pmul(l, r)
                return p if len(p) <= 3 else None
            if e.op == "/" and len(r) == 1 and r[0] != 0:
                return _pscale(l, Fraction(1) / Fraction(r[0]))
            return None

        p = conv(pm.NumOp("-", c.lhs, c.rhs))
        return p if p is not None and len(p) <= 3 else None

    def _sampled_roots(self, c: pm.Comparison, trajs, t0, t1) -> list:
        """Float fallback for margins that are not low-degree polynomials."""
        def m(t):
            vals = dict(self.state.values)
            for f, p in trajs.items():
                vals[f] = _peval_f(p, t)
            look = lambda fl: vals[fl]
            return float(pm.eval_expr(c.lhs, look, None) -
                         pm.eval_expr(c.rhs, look, None))

        roots = []
        n = 256
        t0f, t1f = float(t0), float(t1)
        prev_t, prev_m = t0f, m(t0f)
        for i in range(1, n + 1):
            t = t0f + (t1f - t0f) * i / n
            cur = m(t)
            if prev_m == 0.0 or (prev_m < 0) != (cur < 0):
                a, b = prev_t, t
                for _ in range(80):
                    mid = 0.5 * (a + b)
                    if (m(a) < 0) != (m(mid) < 0):
                        b = mid
                    else:
                        a = mid
                r = Fraction(0.5 * (a + b)).limit_denominator(10 ** 9)
                if Fraction(t0) < r < Fraction(t1):
                    roots.append(r)
            prev_t, prev_m = t, cur
        return roots

    def _check_invariants_exact(self, t0, t1, trajs, as_poly) -> None:
        if t1 <= t0:
            return
        for owner, c in self.monitored_invariants():
            p = as_poly(c)
            if p is None:
                self._check_invariant_sampled(owner, c, trajs, t0, t1)
                continue
            if c.op in ("<", "<="):
                p = _pscale(p, Fraction(-1))
            elif c.op in ("=", "!="):
                continue  # equality invariants over evolving state: pointwise
            bad = self._negative_stretches(p, Fraction(t0), Fraction(t1))
            for lo, hi, depth in bad:
                if depth > self.eps:
                    self.fail("invariant", lo, hi, owner, c,
                              "condition %s of %s violated on [%s, %s]" %
                              (_fmt_part(c), render_ground_name(owner),
                               _fmt_time(lo), _fmt_time(hi)))

    def _negative_stretches(self, p: tuple, t0, t1) -> list:
        """Maximal [lo, hi] with p < 0 inside [t0, t1], with max depth."""
        pts = [t0] + _proots(p, t0, t1) + [t1]
        out = []
        for a, b in zip(pts, pts[1:]):
            mid = (a + b) / 2
            if _peval(p, mid) < 0:
                depth = -min(_peval(p, a), _peval(p, b), _peval(p, mid),
                             *self._vertex_values(p, a, b))
                if out and out[-1][1] == a:
                    lo, _, d = out[-1]
                    out[-1] = (lo, b, max(d, depth))
                else:
                    out.append((a, b, depth))
        return out

    def _vertex_values(self, p: tuple, a, b) -> list:
        if len(p) == 3 and p[2] != 0:
            v = -Fraction(p[1]) / (2 * Fraction(p[2]))
            if a < v < b:
                return [_peval(p, v)]
        return [Fraction(0)]

    def _check_invariant_sampled(self, owner, c, trajs, t0, t1) -> None:
        roots = self._sampled_roots(c, trajs, t0, t1)
        pts = [Fraction(t0)] + roots + [Fraction(t1)]
        vals = dict(self.state.values)

        def holds_at(t) -> bool:
            for f, p in trajs.items():
                vals[f] = _peval_f(p, t)
            look = lambda fl: vals[fl]
            m = pm.eval_expr(c.lhs, look, None) - pm.eval_expr(c.rhs, look, None)
            return _op_holds(c.op, m, self.eps)

        for a, b in zip(pts, pts[1:]):
            if not holds_at((a + b) / 2):
                self.fail("invariant", a, b, owner, c,
                          "condition %s of %s violated on [%s, %s]" %
                          (_fmt_part(c), render_ground_name(owner),
                           _fmt_time(a), _fmt_time(b)))

    def _segment_numeric(self, t0, t1, evolving, effects):
        frozen = {f: float(v) for f, v in self.state.values.items()}
        idx = {f: i for i, f in enumerate(evolving)}
        shapes = []
        for owner, t_act, kind, fluent, shape, payload in effects:
            sign = 1.0 if kind == "increase" else -1.0
            if shape == "elapsed":
                payload = pm.diff_time(payload)
            shapes.append((idx[fluent], float(t_act), shape, payload, sign))

        def deriv(t: float, y: list) -> list:
            vals = dict(frozen)
            for f, i in idx.items():
                vals[f] = y[i]
            look = lambda fl: vals[fl]
            dy = [0.0] * len(y)
            for i, t_act, shape, payload, sign in shapes:
                if shape == "state":
                    dy[i] += sign * float(pm.eval_expr(payload, look, None))
                else:
                    dy[i] += sign * float(pm.eval_expr(payload, look,
                                                       t - t_act))
            return dy

        def rk4(t: float, y: list, h: float) -> list:
            k1 = deriv(t, y)
            k2 = deriv(t + h / 2, [a + h / 2 * b for a, b in zip(y, k1)])
            k3 = deriv(t + h / 2, [a + h / 2 * b for a, b in zip(y, k2)])
            k4 = deriv(t + h, [a + h * b for a, b in zip(y, k3)])
            return [a + h / 6 * (b + 2 * c + 2 * d + e)
                    for a, b, c, d, e in zip(y, k1, k2, k3, k4)]

        triggers = self.trigger_comparisons()
        invs = self.monitored_invariants()

        def margins(t: float, y: list, comps) -> list:
            vals = dict(frozen)
            for f, i in idx.items():
                vals[f] = y[i]
            look = lambda fl: vals[fl]
            return [float(pm.eval_expr(c.lhs, look, None) -
                          pm.eval_expr(c.rhs, look, None)) for c in comps]

        t, y = float(t0), [float(self.state.lookup(f)) for f in evolving]
        t1f = float(t1)
        samples = [(t, {f: y[i] for f, i in idx.items()})]
        trig_prev = margins(t, y, triggers)
        inv_state = [None] * len(invs)  # open violation start
        inv_prev = margins(t, y, [c for _, c in invs])
        cut = None
        eps_f = float(self.eps)
        while t < t1f - 1e-12 and cut is None:
            h = min(RK_STEP, t1f - t)
            y2 = rk4(t, y, h)
            t2 = t + h
            trig_cur = margins(t2, y2, triggers)
            for j, (a, b) in enumerate(zip(trig_prev, trig_cur)):
                if a == 0.0 or (a < 0) != (b < 0):
                    frac_pos = abs(a) / (abs(a) + abs(b)) if a != b else 0.0
                    cand = t + h * frac_pos
                    if cand > t + 1e-12 and (cut is None or cand < cut):
                        cut = cand
            if cut is not None:
                h2 = cut - t
                y2 = rk4(t, y, h2)
                t2 = cut
            inv_cur = margins(t2, y2, [c for _, c in invs])
            for j, ((owner, c), a, b) in enumerate(zip(invs, inv_prev, inv_cur)):
                ok_now = _op_holds(c.op, Fraction(b).limit_denominator(10 ** 9),
                                   self.eps) if c.op in ("=", "!=") else \
                    (b >= -eps_f if c.op in (">", ">=") else -b >= -eps_f)
                if not ok_now and inv_state[j] is None:
                    frac_pos = abs(a) / (abs(a) + abs(b)) if (a < 0) != (b < 0) \
                        and a != b else 0.0
                    inv_state[j] = t + (t2 - t) * frac_pos
                elif ok_now and inv_state[j] is not None:
                    self._numeric_invariant(invs[j], inv_state[j], t2)
                    inv_state[j] = None
            t, y = t2, y2
            trig_prev, inv_prev = margins(t, y, triggers), inv_cur
            samples.append((t, {f: y[i] for f, i in idx.items()}))
        for j, start in enumerate(inv_state):
            if start is not None:
                self._numeric_invariant(invs[j], start, t)
        # only a genuine interior cut may return an inexact time; a full
        # run must report exactly t1 or the caller would re-enter forever
        reached = Fraction(t).limit_denominator(10 ** 9) if cut is not None \
            else Fraction(t1)
        self.segments.append(Segment(t0, reached, None, samples,
                                     dict(self.state.values)))
        for f, i in idx.items():
            self.state.values[f] = Fraction(y[i]).limit_denominator(10 ** 12)
        return reached

    def _numeric_invariant(self, inv, lo, hi) -> None:
        owner, c = inv
        lo = Fraction(lo).limit_denominator(10 ** 9)
        hi = Fraction(hi).limit_denominator(10 ** 9)
        self.fail("invariant", lo, hi, owner, c,
                  "condition %s of %s violated on [%s, %s]" %
                  (_fmt_part(c), render_ground_name(owner),
                   _fmt_time(lo), _fmt_time(hi)))


def _interp(samples: list, fluent, t: float) -> float:
    prev = None
    for st, vals in samples:
        if fluent not in vals:
            break
        if st >= t:
            if prev is None or st == t:
                return vals[fluent]
            pt, pv = prev
            w = (t - pt) / (st - pt) if st != pt else 0.0
            return pv + w * (vals[fluent] - pv)
        prev = (st, vals[fluent])
    if prev is not None:
        return prev[1]
    raise ValidationError("no sample for %s" % (fluent,))


def _fmt_time(t) -> str:
    return "%.6g" % float(t)


def _fmt_part(part) -> str:
    if isinstance(part, pm.Comparison):
        return "(%s %s %s)" % (part.op, pm.render_expr(part.lhs),
                               pm.render_expr(part.rhs))
    return ("" if part.positive else "(not %s)") % (part.prop,) if not \
        part.positive else "%s" % (part.prop,)


def validate(plan: Plan, task: GroundTask, eps=Fraction(1, 1000),
             until=None, boundaries=None) -> ValidationReport:
    """Simulate ``plan`` under continuous semantics and report violations.

    ``until`` is the goal-check horizon (defaults to the last scheduled
    time); ``boundaries`` are the discretization interval boundary times
    used to attribute invariant breaches to interval indices.
    """
    sim = _Sim(task, eps)
    steps = plan.sorted_steps() if isinstance(plan, Plan) else \
        sorted(plan, key=lambda s: (s.time, s.name))
    happenings: dict = {}
    for s in steps:
        if s.name in task.actions:
            if s.duration not in (None, Fraction(0)):
                raise ValidationError("%s is instantaneous" %
                                      render_ground_name(s.name))
            happenings.setdefault(Fraction(s.time), []).append(("instant", s))
        elif s.name in task.durative_actions:
            if s.duration is None:
                raise ValidationError("%s needs a duration" %
                                      render_ground_name(s.name))
            happenings.setdefault(Fraction(s.time), []).append(("start", s))
            happenings.setdefault(Fraction(s.time + s.duration),
                                  []).append(("end", s))
        else:
            raise ValidationError("unknown operator %s" %
                                  render_ground_name(s.name))
    last = max(happenings) if happenings else Fraction(0)
    if until is None and isinstance(plan, Plan) and plan.horizon is not None:
        until = plan.horizon
    horizon = Fraction(until) if until is not None else last
    if horizon < last:
        raise ValidationError("horizon %s precedes last happening %s" %
                              (_fmt_time(horizon), _fmt_time(last)))

    sim.cascade(Fraction(0))
    t = Fraction(0)
    at_happening = True
    for _ in range(MAX_SEGMENTS):
        # discrete happenings at t: ends, then starts, then self-triggering
        group = happenings.get(t, ()) if at_happening else ()
        for kind, s in group:
            if kind != "end":
                continue
            d = task.durative_actions[s.name]
            sim.check_condition(d.cond_end, t, s.name, "end condition")
            _apply_instant(d.eff_end, sim.state)
            sim.state.durative.pop(s.name, None)
        for kind, s in group:
            if kind == "end":
                continue
            if kind == "instant":
                a = task.actions[s.name]
                sim.check_condition(a.precond, t, s.name, "precondition")
                _apply_instant(a.effect, sim.state)
                continue
            d = task.durative_actions[s.name]
            if s.name in sim.state.durative:
                sim.fail("overlap", t, t, s.name, None,
                         "%s started while already running" %
                         render_ground_name(s.name))
                continue
            for op, expr in d.duration:
                bound = pm.eval_expr(expr, sim.state.lookup, None)
                if not _op_holds(op, Fraction(s.duration) - bound, sim.eps):
                    sim.fail("duration", t, t, s.name, None,
                             "duration %s violates (%s ?duration %s)" %
                             (_fmt_time(s.duration), op, _fmt_time(bound)))
            sim.check_condition(d.cond_start, t, s.name, "start condition")
            _apply_instant(d.eff_start, sim.state)
            sim.state.durative[s.name] = (t, t + s.duration)
        if group:
            sim.cascade(t)
            # boolean over-all conditions are state-constant between
            # happenings, so the discrete points are where they can break
            for gn in sorted(sim.state.durative, key=repr):
                d = task.durative_actions[gn]
                for part in d.cond_over:
                    if isinstance(part, pm.Literal) and \
                            not _lit_true(part, sim.state):
                        sim.fail("invariant", t, t, gn, None,
                                 "condition %s of %s broken at %s" %
                                 (_fmt_part(part), render_ground_name(gn),
                                  _fmt_time(t)))
        pending = [ht for ht in happenings if ht > t]
        if t >= horizon and not pending:
            break
        t_next = min(pending) if pending else horizon
        reached = sim.run_segment(t, t_next)
        if reached < t_next:  # a trigger flipped mid-segment
            t = reached
            sim.cascade(t)
            at_happening = False
        else:
            t = t_next
            at_happening = True
    else:
        raise ValidationError("segment budget exhausted")

    for gn, (ts, te) in sim.state.durative.items():
        sim.fail("precondition", te, te, gn, None,
                 "%s never ends within the horizon" % render_ground_name(gn))
    for part in task.goal:
        if isinstance(part, pm.Literal):
            if not _lit_true(part, sim.state):
                sim.fail("goal", horizon, horizon, None, None,
                         "goal %s not satisfied at %s" %
                         (_fmt_part(part), _fmt_time(horizon)))
        elif not _comparison_holds(part, sim.state, sim.eps):
            sim.fail("goal", horizon, horizon, None, part,
                     "goal %s not satisfied at %s" %
                     (_fmt_part(part), _fmt_time(horizon)))

    if boundaries:
        bs = [Fraction(b) for b in boundaries]
        for v in sim.violations:
            if v.kind != "invariant":
                continue
            for i in range(len(bs) - 1):
                if bs[i] <= v.time < bs[i + 1] or \
                        (i == len(bs) - 2 and v.time >= bs[i + 1]):
                    v.step = i
                    break

    ok = not sim.violations
    return ValidationReport(ok, sim.violations, horizon, sim.segments,
                            dict(sim.state.values), set(sim.state.props))
