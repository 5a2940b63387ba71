"""Encoding of a ground hybrid task as a constraint answer set program.

The plan horizon is a fixed number of abstract steps; step ``I`` denotes the
closed time interval ``[tstart(I), tend(I)]``, consecutive intervals share
their boundary, and all discrete change happens at boundaries: an occurrence
at step ``I`` takes effect at the start of step ``I+1`` and its numeric side
is anchored at ``tend(I)``.

For every numeric fluent ``n`` the program carries interval-endpoint
variables ``v_initial(n,I)`` and ``v_final(n,I)`` linked by a balance
equation over per-source continuous contributions (one reified aggregate per
direction), and boundary updates between intervals (carry-over, instant
increments/decrements, assignments).  Booleans use ``holds``/strong negation
with inertia defaults.  Durative actions choose a start step and exactly one
end step and pin their duration; processes and events follow forced-trigger
semantics: whenever their condition is not asserted false they must run, and
asserting falsehood reifies the complemented comparison.

Three encoding variants: ``basic`` is the bare generate-and-test program;
``heuristic`` additionally demands an agent occurrence per step and can pin
requested occurrences; ``estimator`` tracks integer-valued assignment
fluents with companion atoms so the discrete search can see their values.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

from .casp.lang import (App, Builtin, Choice, ChoiceElem, Comparison, Lit,
                        Naf, Program, Rule, SumConstraint, Term, Var, app,
                        required)
from .pddl import model as pm
from .pddl.grounding import GroundTask

I = Var("I")
I1 = Var("I1")
I2 = Var("I2")
F = Var("F")


class EncodingError(Exception):
    pass


@dataclass
class EncodingConfig:
    last_step: int
    variant: str = "basic"  # basic | heuristic | estimator
    min_actions_per_step: int = 0
    max_actions_per_step: int = 1
    time_bounds: tuple = (0, 10 ** 4)  # value domain for every CSP variable
    hints: tuple = ()  # ((occurrence term, step), ...): forced occurrences
    require_action_steps: bool = True  # heuristic: no idle steps


# ---------------------------------------------------------------------------
# Symbol construction


_SAFE = re.compile(r"[^a-z0-9_]+")


class Vocabulary:
    """Deterministic names for generated relations, collision-free."""

    def __init__(self):
        self._taken: dict[str, Term] = {}

    def relation(self, prefix: str, term: Term) -> str:
        flat = _SAFE.sub("_", _flatten(term)).strip("_")
        base = "%s_%s" % (prefix, flat) if flat else prefix
        name = base
        k = 2
        while name in self._taken and self._taken[name] != (prefix, term):
            name = "%s_%d" % (base, k)
            k += 1
        self._taken[name] = (prefix, term)
        return name


def _flatten(t: Term) -> str:
    if isinstance(t, App):
        bits = [t.functor] + [_flatten(a) for a in t.args]
        return "_".join(bits)
    return str(t)


def ground_term(gn) -> Term:
    """Operator/fluent instance name as a term: ``refuel(t1)`` or ``generate``."""
    name, args = gn
    return App(name, tuple(args)) if args else name


def fluent_term(f: pm.FluentRef) -> Term:
    return App(f.name, tuple(f.args)) if f.args else f.name


def prop_term(p: pm.Proposition) -> Term:
    return App(p.name, tuple(p.args)) if p.args else p.name


def holds(f: Term, step: Term, neg: bool = False) -> Lit:
    return Lit(app("holds", f, step), neg)


def occurs(what: Term, step: Term) -> Lit:
    return Lit(app("occurs", what, step))


def v_initial(n: Term, step: Term) -> Term:
    return app("v_initial", n, step)


def v_final(n: Term, step: Term) -> Term:
    return app("v_final", n, step)


def tstart(step: Term) -> Term:
    return app("tstart", step)


def tend(step: Term) -> Term:
    return app("tend", step)


def contrib_total(n: Term, cat: str, step: Term) -> Term:
    return app("v", app("contrib", n, cat), step)


def contrib_source(src: Term, n: Term, step: Term) -> Term:
    return app("v", app("contr", src, n), step)


def boundary_var(src: Term, n: Term, ordinal: int, step: Term) -> Term:
    return app("v", app("bnd", src, n, ordinal), step)


def inprogr(d: Term) -> Term:
    return app("inprogr", d)


# ---------------------------------------------------------------------------
# Expression conversion


def conv_expr(e: pm.NumExpr, fmap, tmap: Term | None = None) -> Term:
    """PDDL numeric expression to a constraint term.

    ``fmap(FluentRef) -> Term`` names fluent values; ``tmap`` replaces the
    continuous-time symbol.
    """
    if isinstance(e, Fraction):
        return e
    if isinstance(e, pm.FluentRef):
        return fmap(e)
    if isinstance(e, pm.TimeVar):
        if tmap is None:
            raise EncodingError("#t outside a continuous effect")
        return tmap
    if isinstance(e, pm.NumOp):
        return App(e.op, (conv_expr(e.lhs, fmap, tmap),
                          conv_expr(e.rhs, fmap, tmap)))
    raise EncodingError("cannot encode expression %r" % (e,))


def conv_comparison(c: pm.Comparison, fmap) -> Comparison:
    return Comparison(c.op, conv_expr(c.lhs, fmap), conv_expr(c.rhs, fmap))


def at_final(step: Term):
    return lambda f: v_final(fluent_term(f), step)


def at_initial(step: Term):
    return lambda f: v_initial(fluent_term(f), step)


# ---------------------------------------------------------------------------
# Encoder


class Encoder:
    def __init__(self, task: GroundTask, config: EncodingConfig):
        self.task = task
        self.config = config
        self.vocab = Vocabulary()
        self.program = Program()
        self.fluents = sorted(task.num_fluents, key=repr)
        self.fterms = {f: fluent_term(f) for f in self.fluents}
        # continuous selector relations per (fluent, category)
        self.sel_rel: dict = {}
        # fluents receiving instant increments/decrements at boundaries
        self.bnd_rel: dict = {}
        self.assigned: set = set()  # fluents subject to assignment
        self._survey()

    # -- survey of effect structure --------------------------------------

    def _survey(self) -> None:
        for f in self.fluents:
            n = self.fterms[f]
            self.sel_rel[(f, "incr")] = self.vocab.relation("incr", n)
            self.sel_rel[(f, "decr")] = self.vocab.relation("decr", n)

        def eat_instant(eff: pm.InstantEffect):
            for a in eff.assigns:
                if a.kind == "assign":
                    self.assigned.add(a.fluent)
                else:
                    key = (a.fluent, "incr" if a.kind == "increase" else "decr")
                    if key not in self.bnd_rel:
                        prefix = "binc" if key[1] == "incr" else "bdec"
                        self.bnd_rel[key] = self.vocab.relation(
                            prefix, self.fterms[a.fluent])

        for a in self.task.actions.values():
            eat_instant(a.effect)
        for e in self.task.events.values():
            eat_instant(e.effect)
        for d in self.task.durative_actions.values():
            eat_instant(d.eff_start)
            eat_instant(d.eff_end)

    # -- small builders ---------------------------------------------------

    def add(self, head, body=(), info=None, comment=None) -> Rule:
        return self.program.add(head, body, comment, info)

    def last(self) -> int:
        return self.config.last_step

    def step_guard(self, v: Var, strict: bool = True):
        g = [Lit(app("step", v))]
        if strict:
            g.append(Builtin("<", v, self.last()))
        return g

    def reify_comparisons(self, cond, step_map, body, info=None) -> None:
        for c in pm.condition_comparisons(cond):
            self.add(required(conv_comparison(c, step_map)), body, info=info)

    def bool_denials(self, cond, step: Term, body) -> None:
        for part in pm.condition_literals(cond):
            target = holds(prop_term(part.prop), step, neg=not part.positive)
            self.add(None, list(body) + [Naf(target)])

    # -- sections ---------------------------------------------------------

    def facts(self) -> None:
        for i in range(self.last() + 1):
            self.add(Lit(app("step", i)))
        lo, hi = self.config.time_bounds
        self.add(Lit(app("cspdomain", app("q", Fraction(lo), Fraction(hi)))))

    def declarations(self) -> None:
        step_i = [Lit(app("step", I))]
        self.add(Lit(app("cspvar", tstart(I))), step_i)
        self.add(Lit(app("cspvar", tend(I))), step_i)
        for f in self.fluents:
            n = self.fterms[f]
            self.add(Lit(app("cspvar", v_initial(n, I))), step_i)
            self.add(Lit(app("cspvar", v_final(n, I))), step_i)
            self.add(Lit(app("cspvar", contrib_total(n, "incr", I))), step_i)
            self.add(Lit(app("cspvar", contrib_total(n, "decr", I))), step_i)

    def time_structure(self) -> None:
        self.add(required(Comparison(">=", tstart(0), Fraction(0))))
        self.add(required(Comparison(">=", tend(I), tstart(I))),
                 [Lit(app("step", I))])
        self.add(required(Comparison("=", tstart(I2), tend(I1))),
                 [Lit(app("step", I1)), Lit(app("step", I2)),
                  Builtin("=", I2, App("+", (I1, 1)))])

    def initial_state(self) -> None:
        for p in sorted(self.task.bool_fluents, key=repr):
            lit = holds(prop_term(p), 0, neg=p not in self.task.init_true)
            self.add(lit)
        for d in sorted(self.task.durative_actions, key=repr):
            self.add(holds(inprogr(ground_term(d)), 0, neg=True))
        for p in sorted(self.task.processes, key=repr):
            self.add(holds(inprogr(ground_term(p)), 0, neg=True))
        for f in self.fluents:
            val = self.task.init_values[f]
            self.add(required(Comparison("=", v_initial(self.fterms[f], 0),
                                         val)))

    def instantaneous_choices(self) -> None:
        names = sorted(self.task.actions, key=repr)
        if not names:
            return
        elems = tuple(ChoiceElem(occurs(ground_term(gn), I).atom)
                      for gn in names)
        head = Choice(self.config.min_actions_per_step,
                      self.config.max_actions_per_step, elems)
        self.add(head, self.step_guard(I))

    def instant_operator(self, gn, precond, effect: pm.InstantEffect,
                         occ: Lit) -> None:
        """Preconditions and effects shared by actions and events."""
        step = occ.atom.args[1]
        self.bool_denials(precond, step, [occ])
        self.reify_comparisons(precond, at_final(step), [occ])
        self.apply_instant_effect(gn, effect, occ)

    def apply_instant_effect(self, gn, effect: pm.InstantEffect, occ: Lit) -> None:
        step = occ.atom.args[1]
        if isinstance(step, Var):
            body = [occ, Builtin("=", I2, App("+", (step, 1)))]
            nxt_t: Term = I2
        else:
            body = [occ]
            nxt_t = step + 1
        for l in effect.lits:
            self.add(holds(prop_term(l.prop), nxt_t, neg=not l.positive), body)
        ordinals: dict = {}
        for a in effect.assigns:
            n = self.fterms[a.fluent]
            if a.kind == "assign":
                rhs = conv_expr(a.expr, at_final(step))
                self.add(required(Comparison("=", v_initial(n, nxt_t), rhs)),
                         body)
                self.add(Lit(app("ab_next", n, step)), [occ])
            else:
                cat = "incr" if a.kind == "increase" else "decr"
                k = ordinals.get((a.fluent, cat), 0)
                ordinals[(a.fluent, cat)] = k + 1
                src = ground_term(gn)
                var = boundary_var(src, n, k, step)
                rel = self.bnd_rel[(a.fluent, cat)]
                self.add(Lit(App(rel, (step, var))), [occ])
                rhs = conv_expr(a.expr, at_final(step))
                self.add(required(Comparison("=", var, rhs)), [occ])

    def actions_section(self) -> None:
        self.instantaneous_choices()
        for gn in sorted(self.task.actions, key=repr):
            a = self.task.actions[gn]
            self.instant_operator(gn, a.precond, a.effect,
                                  occurs(ground_term(gn), I))

    def durative_section(self) -> None:
        for gn in sorted(self.task.durative_actions, key=repr):
            d = self.task.durative_actions[gn]
            dt = ground_term(gn)
            start = app("start", dt)
            end = app("end", dt)
            # one optional execution over the horizon; room for a later end
            elem = ChoiceElem(occurs(start, I).atom,
                              (Lit(app("step", I)),
                               Builtin("<", I, self.last() - 1)))
            self.add(Choice(0, 1, (elem,)))
            # exactly one end after the start
            end_elem = ChoiceElem(
                occurs(end, I2).atom,
                (Lit(app("step", I2)), Builtin(">", I2, I1),
                 Builtin("<", I2, self.last())))
            self.add(Choice(1, 1, (end_elem,)), [occurs(start, I1)])
            # duration pinning
            for op, expr in d.duration:
                bound = conv_expr(expr, at_final(I1))
                span = App("-", (tend(I2), tend(I1)))
                self.add(required(Comparison(op, span, bound)),
                         [occurs(start, I1), occurs(end, I2),
                          Builtin(">", I2, I1)])
            # conditions
            self.bool_denials(d.cond_start, I, [occurs(start, I)])
            self.reify_comparisons(d.cond_start, at_final(I), [occurs(start, I)])
            self.bool_denials(d.cond_end, I, [occurs(end, I)])
            self.reify_comparisons(d.cond_end, at_final(I), [occurs(end, I)])
            prog = holds(inprogr(dt), I)
            self.bool_denials(d.cond_over, I, [prog])
            for c in pm.condition_comparisons(d.cond_over):
                info = {"kind": "invariant", "owner": dt, "comparison": c}
                self.add(required(conv_comparison(c, at_initial(I))), [prog],
                         info=info)
                self.add(required(conv_comparison(c, at_final(I))), [prog],
                         info=info)
            # progress flag and boundary effects
            self.add(holds(inprogr(dt), I2),
                     [occurs(start, I1), Builtin("=", I2, App("+", (I1, 1)))])
            self.add(holds(inprogr(dt), I2, neg=True),
                     [occurs(end, I1), Builtin("=", I2, App("+", (I1, 1)))])
            self.apply_instant_effect(gn, d.eff_start, occurs(start, I))
            self.apply_instant_effect(gn, d.eff_end, occurs(end, I))
            self.continuous_contributions(dt, d.eff_cont)

    def continuous_contributions(self, owner: Term, effects) -> None:
        guard = holds(inprogr(owner), I)
        for eff in effects:
            n = self.fterms[eff.fluent]
            cat = "incr" if eff.kind == "increase" else "decr"
            rel = self.sel_rel[(eff.fluent, cat)]
            var = contrib_source(owner, n, I)
            span = App("-", (tend(I), tstart(I)))
            rate = conv_expr(eff.expr, at_initial(I), tmap=span)
            info = {"kind": "contribution", "owner": owner,
                    "fluent": eff.fluent, "category": cat, "expr": eff.expr,
                    "relation": rel}
            self.add(Lit(App(rel, (I, var))), [guard], info=info)
            self.add(required(Comparison("=", var, rate)), [guard], info=info)

    def process_section(self) -> None:
        for gn in sorted(self.task.processes, key=repr):
            p = self.task.processes[gn]
            pt = ground_term(gn)
            self.trigger_choice(pt, p.precond,
                                extra_guard=[Naf(holds(inprogr(pt), I))])
            self.add(holds(inprogr(pt), I2),
                     [occurs(pt, I1), Builtin("=", I2, App("+", (I1, 1)))])
            # while running: each boundary either continues or stops
            stop = app("stop", pt)
            prog = holds(inprogr(pt), I)
            self.add(Choice(1, 1, (ChoiceElem(occurs(stop, I).atom),
                                   ChoiceElem(app("cont", pt, I)))),
                     [prog] + self.step_guard(I))
            cont = Lit(app("cont", pt, I))
            self.reify_comparisons(p.precond, at_final(I), [cont])
            self.bool_denials(p.precond, I, [cont])
            self.falsity_choice(pt, p.precond, [occurs(stop, I)])
            self.add(holds(inprogr(pt), I2, neg=True),
                     [occurs(stop, I1), Builtin("=", I2, App("+", (I1, 1)))])
            self.continuous_contributions(pt, p.effects)

    def event_section(self) -> None:
        for gn in sorted(self.task.events, key=repr):
            e = self.task.events[gn]
            et = ground_term(gn)
            self.trigger_choice(et, e.precond, extra_guard=[])
            self.apply_instant_effect(gn, e.effect, occurs(et, I))

    def trigger_choice(self, t: Term, cond, extra_guard) -> None:
        """Forced-trigger step choice: run, or assert a condition false."""
        elems = [ChoiceElem(occurs(t, I).atom)]
        for j, _ in enumerate(cond, start=1):
            elems.append(ChoiceElem(app("is_false", app("cond", t, j), I)))
        self.add(Choice(1, 1, tuple(elems)),
                 self.step_guard(I) + list(extra_guard))
        self.falsity_links(t, cond)

    def falsity_choice(self, t: Term, cond, body) -> None:
        """Stopping requires naming at least one failed condition."""
        elems = tuple(ChoiceElem(app("is_false", app("cond", t, j), I))
                      for j, _ in enumerate(cond, start=1))
        if not elems:
            # a condition-free process can never stop on its own
            self.add(None, list(body))
            return
        self.add(Choice(1, 1, elems), list(body))

    def falsity_links(self, t: Term, cond) -> None:
        for j, part in enumerate(cond, start=1):
            isf = Lit(app("is_false", app("cond", t, j), I))
            if isinstance(part, pm.Literal):
                # chosen false: the boolean must really be false
                target = holds(prop_term(part.prop), I, neg=part.positive)
                self.add(None, [isf, Naf(target)])
            else:
                comp = conv_comparison(part, at_final(I)).complement()
                self.add(required(comp), [isf])

    def fluent_plumbing(self) -> None:
        for f in self.fluents:
            n = self.fterms[f]
            step_i = [Lit(app("step", I))]
            for cat in ("incr", "decr"):
                total = contrib_total(n, cat, I)
                rel = self.sel_rel[(f, cat)]
                self.add(required(Comparison(">=", total, Fraction(0))), step_i,
                         info={"kind": "total_sign", "fluent": f,
                               "category": cat})
                self.add(required(SumConstraint(rel, I, 2, "=", total)), step_i,
                         info={"kind": "total_sum", "fluent": f,
                               "category": cat, "relation": rel})
            balance = Comparison(
                "=", v_final(n, I),
                App("+", (v_initial(n, I),
                          App("-", (contrib_total(n, "incr", I),
                                    contrib_total(n, "decr", I))))))
            self.add(required(balance), step_i,
                     info={"kind": "balance", "fluent": f})
            # boundary carry-over with instant deltas
            carry_body = [Lit(app("step", I1)), Lit(app("step", I2)),
                          Builtin("=", I2, App("+", (I1, 1)))]
            if f in self.assigned:
                carry_body.append(Naf(Lit(app("ab_next", n, I1))))
            rhs: Term = v_final(n, I1)
            for cat, sign in (("incr", "+"), ("decr", "-")):
                key = (f, cat)
                if key in self.bnd_rel:
                    tot = app("v", app("bndtot", n, cat), I1)
                    rhs = App(sign, (rhs, tot))
            self.add(required(Comparison("=", v_initial(n, I2), rhs)),
                     carry_body, info={"kind": "carry", "fluent": f})
            for cat in ("incr", "decr"):
                key = (f, cat)
                if key in self.bnd_rel:
                    tot = app("v", app("bndtot", n, cat), I)
                    body = self.step_guard(I)
                    self.add(required(SumConstraint(self.bnd_rel[key], I, 2,
                                                    "=", tot)), body)
                    self.add(required(Comparison(">=", tot, Fraction(0))), body)

    def frame_axioms(self) -> None:
        succ = [Builtin("=", I2, App("+", (I1, 1))), Lit(app("step", I2))]
        self.add(holds(F, I2),
                 [holds(F, I1)] + succ + [Naf(holds(F, I2, neg=True))])
        self.add(holds(F, I2, neg=True),
                 [holds(F, I1, neg=True)] + succ + [Naf(holds(F, I2))])

    def goal_section(self) -> None:
        last = self.last()
        for part in self.task.goal:
            if isinstance(part, pm.Literal):
                target = holds(prop_term(part.prop), last,
                               neg=not part.positive)
                self.add(None, [Naf(target)])
            else:
                self.add(required(conv_comparison(part, at_final(last))))

    def variant_section(self) -> None:
        cfg = self.config
        if cfg.variant not in ("basic", "heuristic", "estimator"):
            raise EncodingError("unknown encoding variant %r" % cfg.variant)
        for term, step in cfg.hints:
            self.add(None, [Naf(occurs(term, step))])
        if cfg.variant == "heuristic":
            if cfg.require_action_steps:
                for gn in sorted(self.task.actions, key=repr):
                    self.add(Lit(app("some_action", I)),
                             [occurs(ground_term(gn), I)])
                for gn in sorted(self.task.durative_actions, key=repr):
                    dt = ground_term(gn)
                    self.add(Lit(app("some_action", I)),
                             [occurs(app("start", dt), I)])
                    self.add(Lit(app("some_action", I)),
                             [occurs(app("end", dt), I)])
                # triggered happenings count as well: a step is idle only
                # when nothing at all occurs there
                for gn in sorted(self.task.processes, key=repr):
                    pt = ground_term(gn)
                    self.add(Lit(app("some_action", I)), [occurs(pt, I)])
                    self.add(Lit(app("some_action", I)),
                             [occurs(app("stop", pt), I)])
                for gn in sorted(self.task.events, key=repr):
                    self.add(Lit(app("some_action", I)),
                             [occurs(ground_term(gn), I)])
                self.add(None, self.step_guard(I) +
                         [Naf(Lit(app("some_action", I)))])
        if cfg.variant == "estimator":
            self.estimator_section()

    def _integer_assign_only(self, f: pm.FluentRef) -> bool:
        ok = True

        def scan(eff: pm.InstantEffect):
            nonlocal ok
            for a in eff.assigns:
                if a.fluent != f:
                    continue
                if a.kind != "assign" or not isinstance(a.expr, Fraction) \
                        or a.expr.denominator != 1:
                    ok = False

        for a in self.task.actions.values():
            scan(a.effect)
        for e in self.task.events.values():
            scan(e.effect)
        for d in self.task.durative_actions.values():
            scan(d.eff_start)
            scan(d.eff_end)
            for c in d.eff_cont:
                if c.fluent == f:
                    ok = False
        for p in self.task.processes.values():
            for c in p.effects:
                if c.fluent == f:
                    ok = False
        return ok

    def estimator_section(self) -> None:
        tracked = [f for f in self.fluents
                   if f in self.assigned and self._integer_assign_only(f)
                   and self.task.init_values[f].denominator == 1]
        succ = [Builtin("=", I2, App("+", (I1, 1))), Lit(app("step", I2))]
        for f in tracked:
            n = self.fterms[f]
            self.add(Lit(app("has_val", n, self.task.init_values[f], 0)))
            self.add(Lit(app("has_val", n, F, I2)),
                     [Lit(app("has_val", n, F, I1))] + succ +
                     [Naf(Lit(app("val_ab", n, I2)))])
            self.add(required(Comparison("=", v_initial(n, I), F)),
                     [Lit(app("has_val", n, F, I)), Lit(app("step", I))])

        tracked_set = set(tracked)

        def emit(eff: pm.InstantEffect, occ: Lit):
            step = occ.atom.args[1]
            for a in eff.assigns:
                if a.kind == "assign" and a.fluent in tracked_set:
                    n = self.fterms[a.fluent]
                    body = [occ, Builtin("=", I2, App("+", (step, 1)))]
                    self.add(Lit(app("has_val", n, a.expr, I2)), body)
                    self.add(Lit(app("val_ab", n, I2)), body)

        for gn in sorted(self.task.actions, key=repr):
            emit(self.task.actions[gn].effect, occurs(ground_term(gn), I))
        for gn in sorted(self.task.events, key=repr):
            emit(self.task.events[gn].effect, occurs(ground_term(gn), I))
        for gn in sorted(self.task.durative_actions, key=repr):
            d = self.task.durative_actions[gn]
            dt = ground_term(gn)
            emit(d.eff_start, occurs(app("start", dt), I))
            emit(d.eff_end, occurs(app("end", dt), I))

    # -- driver -----------------------------------------------------------

    def encode(self) -> Program:
        self.facts()
        self.declarations()
        self.time_structure()
        self.initial_state()
        self.actions_section()
        self.durative_section()
        self.process_section()
        self.event_section()
        self.fluent_plumbing()
        self.frame_axioms()
        self.goal_section()
        self.variant_section()
        return self.program


def encode(task: GroundTask, config: EncodingConfig) -> Program:
    return Encoder(task, config).encode()
