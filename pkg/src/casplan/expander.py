"""Constraint expansion: repairing interval-interior invariant breaches.

The numeric side of the encoding constrains fluent values only at interval
boundaries, so a trajectory can break an invariant strictly inside an
interval while every boundary constraint holds.  The repair instantiates
the broken invariant at a few interpolated timepoints.  For each chosen
absolute time ``delta`` and each fluent of the invariant it emits

* one fresh interior-value variable ``v_final_<delta>(n, s)``,
* per continuous source a copy variable ``v_<delta>(contr(d, n), s)``
  pinned — only while its owner is in progress — to the source's
  contribution with the time argument rescaled from the full interval span
  to ``offset * span``, where ``offset`` places ``delta`` inside the
  interval's scheduled time window,
* a balance equation defining the interior value from those copies, and
* the invariant itself required of the interior value while its owner runs.

Because the rescaled span stays symbolic in ``tstart(s)``/``tend(s)``, a
re-solve that keeps the same occurrence pattern must move the schedule until
the invariant holds at each instantiated relative position; a solve that
changes the pattern leaves the copies unconstrained and the next validation
pass judges the new trajectory instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .casp.lang import App, Comparison, Lit, Program, Rule, app, required
from .encoder import (at_initial, conv_expr, fluent_term, ground_term, holds,
                      inprogr, tend, tstart, v_initial)
from .pddl import model as pm


class ExpansionError(Exception):
    pass


@dataclass(frozen=True)
class ExpansionDelta:
    """Ground rules instantiating one invariant at one timepoint."""

    delta: Fraction
    step: int
    rules: tuple
    value_names: tuple  # fresh interior-value functor names


@dataclass(frozen=True)
class Expansion:
    program: Program  # original program plus all new rules
    deltas: tuple

    @property
    def rules(self) -> tuple:
        return tuple(r for d in self.deltas for r in d.rules)

    @property
    def timepoints(self) -> tuple:
        return tuple(d.delta for d in self.deltas)


def select_timepoints(lo, hi, k: int = 3) -> list:
    """``k`` uniformly spaced times over [lo, hi], endpoints included,
    deduplicated; ``k = 1`` picks the midpoint."""
    lo, hi = Fraction(lo), Fraction(hi)
    if k < 1:
        raise ExpansionError("need at least one timepoint")
    if k == 1:
        pts = [(lo + hi) / 2]
    else:
        pts = [lo + (hi - lo) * Fraction(i, k - 1) for i in range(k)]
    out = []
    for p in pts:
        if not out or out[-1] != p:
            out.append(p)
    return out


def offset(delta, start, end) -> Fraction:
    """Position of ``delta`` within [start, end] normalized to [0, 1];
    clamped outside, and 0 by convention on a zero-length interval."""
    delta, start, end = Fraction(delta), Fraction(start), Fraction(end)
    if end <= start:
        return Fraction(0)
    if delta < start:
        return Fraction(0)
    if delta > end:
        return Fraction(1)
    return (delta - start) / (end - start)


def _decimal(x: Fraction) -> str:
    """Shortest decimal spelling; exact when the fraction terminates."""
    d = x.denominator
    while d % 2 == 0:
        d //= 2
    while d % 5 == 0:
        d //= 5
    if d == 1 and float(x) == x:
        text = "%s" % float(x)
        if "e" not in text and "E" not in text:
            return text.rstrip("0").rstrip(".") if "." in text else text
    return repr(float(x))


def timepoint_value_name(delta) -> str:
    return "v_final_" + _decimal(Fraction(delta))


def interior_value(delta, n, step) -> App:
    return App(timepoint_value_name(delta), (n, step))


def copy_source(delta, src, n, step) -> App:
    return App("v_" + _decimal(Fraction(delta)), (App("contr", (src, n)), step))


def _contributions(program: Program, fluent=None) -> list:
    seen = set()
    out = []
    for r in program.rules:
        info = r.info
        if not info or info.get("kind") != "contribution":
            continue
        if fluent is not None and info["fluent"] != fluent:
            continue
        key = (repr(info["owner"]), repr(info["fluent"]), info["category"])
        if key not in seen:
            seen.add(key)
            out.append(info)
    return out


def expand_fluent(program: Program, fluent: pm.FluentRef, step: int, delta,
                  window) -> list:
    """Rules defining the interior value of one fluent at one timepoint.

    ``window`` is the attributed interval's scheduled (start, end) times in
    the witness; it fixes the relative position the copies are pinned at.
    """
    delta = Fraction(delta)
    lam = offset(delta, window[0], window[1])
    n = fluent_term(fluent)
    value = interior_value(delta, n, step)
    span = App("-", (tend(step), tstart(step)))
    scaled = App("*", (lam, span))
    rules = [Rule(Lit(app("cspvar", value)), (),
                  comment="interior value of %s at time %s" %
                          (pm.render_expr(fluent), _decimal(delta)))]
    total: object = v_initial(n, step)
    for info in _contributions(program, fluent):
        owner = info["owner"]
        copy = copy_source(delta, owner, n, step)
        contrib = conv_expr(info["expr"], at_initial(step), tmap=scaled)
        rules.append(Rule(Lit(app("cspvar", copy))))
        rules.append(Rule(required(Comparison("=", copy, contrib)),
                          (holds(inprogr(owner), step),)))
        op = "+" if info["category"] == "incr" else "-"
        total = App(op, (total, copy))
    rules.append(Rule(required(Comparison("=", value, total))))
    return rules


def split_violation(violation, step_times) -> list:
    """(step, lo, hi) pieces of a breach range, cut at interval boundaries."""
    lo = Fraction(violation.time)
    hi = Fraction(violation.end_time)
    bounds = [Fraction(b) for b in step_times]
    if len(bounds) < 2:
        raise ExpansionError("schedule has no intervals")
    if lo == hi:
        for s in range(len(bounds) - 1):
            if bounds[s] <= lo < bounds[s + 1] or \
                    (s == len(bounds) - 2 and lo == bounds[s + 1]):
                return [(s, lo, hi)]
        raise ExpansionError("breach time %s outside the schedule" %
                             float(lo))
    pieces = []
    for s in range(len(bounds) - 1):
        a, b = max(lo, bounds[s]), min(hi, bounds[s + 1])
        if a < b:
            pieces.append((s, a, b))
    if not pieces:
        raise ExpansionError("breach range [%s, %s] outside the schedule" %
                             (float(lo), float(hi)))
    return pieces


def expand(program: Program, violations, step_times, k: int = 3) -> Expansion:
    """Union of ``program`` with repair rules for every breach.

    ``step_times`` are the witness boundary times (interval ``s`` spans
    ``step_times[s]`` to ``step_times[s+1]``).  Breach ranges crossing a
    boundary are split first; duplicate rules (already present or emitted
    twice) are dropped, so expanding with no violations is the identity.
    """
    out = program.copy()
    existing = {r.key() for r in out.rules}
    deltas = []
    for violation in violations:
        if violation.comparison is None:
            raise ExpansionError(
                "cannot expand a violation without a comparison")
        cmp_fluents = sorted(
            pm.expr_fluents(violation.comparison.lhs) |
            pm.expr_fluents(violation.comparison.rhs), key=repr)
        if not cmp_fluents:
            raise ExpansionError("invariant %r mentions no fluents" %
                                 (violation.comparison,))
        for s, lo, hi in split_violation(violation, step_times):
            window = (Fraction(step_times[s]), Fraction(step_times[s + 1]))
            for delta in select_timepoints(lo, hi, k):
                new_rules = []
                names = []
                fmap = {}
                for f in cmp_fluents:
                    n = fluent_term(f)
                    if _contributions(program, f):
                        fmap[f] = interior_value(delta, n, s)
                        names.append(timepoint_value_name(delta))
                        new_rules.extend(
                            expand_fluent(program, f, s, delta, window))
                    else:
                        fmap[f] = v_initial(n, s)
                lhs = conv_expr(violation.comparison.lhs, lambda f: fmap[f])
                rhs = conv_expr(violation.comparison.rhs, lambda f: fmap[f])
                new_rules.append(
                    Rule(required(Comparison(violation.comparison.op,
                                             lhs, rhs)),
                         (holds(inprogr(ground_term(violation.owner)), s),)))
                kept = []
                for r in new_rules:
                    if r.key() not in existing:
                        existing.add(r.key())
                        kept.append(r)
                        out.rules.append(r)
                deltas.append(ExpansionDelta(Fraction(delta), s,
                                             tuple(kept), tuple(names)))
    return Expansion(out, tuple(deltas))
