"""Grounding: instantiate schemas over typed objects and simplify.

Produces a :class:`GroundTask` whose operators carry only ground fluent
references.  Numeric fluents that no effect ever changes are replaced by
their initial values, constant subexpressions are folded, operators with
unsatisfiable constant conditions are dropped, and every remaining numeric
fluent is checked to have an initial value.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product

from .model import (Action, Comparison, Condition, ContinuousEffect, Domain,
                    DurativeAction, Event, FluentRef, InstantEffect, Literal,
                    NumAssign, NumExpr, NumOp, Problem, Process, expr_fluents,
                    expr_subst_params, objects_of_type, subst_condition,
                    subst_continuous, subst_instant)


class GroundingError(Exception):
    pass


GroundName = tuple  # (schema_name, tuple_of_object_names)


def render_ground_name(gn: GroundName) -> str:
    name, args = gn
    if not args:
        return name
    return "%s(%s)" % (name, ",".join(args))


@dataclass
class GroundTask:
    domain: Domain
    problem: Problem
    actions: dict = field(default_factory=dict)  # GroundName -> Action
    durative_actions: dict = field(default_factory=dict)
    processes: dict = field(default_factory=dict)
    events: dict = field(default_factory=dict)
    bool_fluents: set = field(default_factory=set)  # ground Propositions in use
    num_fluents: set = field(default_factory=set)  # dynamic ground FluentRefs
    init_true: set = field(default_factory=set)
    init_values: dict = field(default_factory=dict)  # FluentRef -> Fraction
    goal: Condition = ()

    def operators(self) -> dict:
        out = {}
        out.update(self.actions)
        out.update(self.durative_actions)
        out.update(self.processes)
        out.update(self.events)
        return out


def fold_expr(e: NumExpr) -> NumExpr:
    """Evaluate constant subtrees; keep everything else structurally intact."""
    if not isinstance(e, NumOp):
        return e
    l, r = fold_expr(e.lhs), fold_expr(e.rhs)
    if isinstance(l, Fraction) and isinstance(r, Fraction):
        if e.op == "+":
            return l + r
        if e.op == "-":
            return l - r
        if e.op == "*":
            return l * r
        if r == 0:
            raise GroundingError("division by zero in a ground expression")
        return l / r
    return NumOp(e.op, l, r)


def _inline(e: NumExpr, static_values: dict) -> NumExpr:
    if isinstance(e, FluentRef):
        return static_values.get(e, e)
    if isinstance(e, NumOp):
        return NumOp(e.op, _inline(e.lhs, static_values), _inline(e.rhs, static_values))
    return e


def _const_truth(c: Comparison):
    """True/False if both sides are constants, else None."""
    if isinstance(c.lhs, Fraction) and isinstance(c.rhs, Fraction):
        return {"<": c.lhs < c.rhs, "<=": c.lhs <= c.rhs, "=": c.lhs == c.rhs,
                ">=": c.lhs >= c.rhs, ">": c.lhs > c.rhs}[c.op]
    return None


class _Simplifier:
    def __init__(self, static_values: dict, init_true: set, static_preds: set):
        self.static_values = static_values
        self.init_true = init_true
        self.static_preds = static_preds

    def expr(self, e: NumExpr) -> NumExpr:
        return fold_expr(_inline(e, self.static_values))

    def condition(self, cond: Condition):
        """Simplified condition, or None if a part is constantly false."""
        out = []
        for p in cond:
            if isinstance(p, Literal):
                if p.prop.name in self.static_preds:
                    holds = p.prop in self.init_true
                    if holds != p.positive:
                        return None
                    continue
                out.append(p)
            else:
                c = Comparison(p.op, self.expr(p.lhs), self.expr(p.rhs))
                t = _const_truth(c)
                if t is True:
                    continue
                if t is False:
                    return None
                out.append(c)
        return tuple(out)

    def instant(self, eff: InstantEffect) -> InstantEffect:
        assigns = tuple(NumAssign(a.kind, a.fluent, self.expr(a.expr))
                        for a in eff.assigns)
        return InstantEffect(eff.lits, assigns)

    def continuous(self, effs) -> tuple:
        return tuple(ContinuousEffect(e.kind, e.fluent, self.expr(e.expr))
                     for e in effs)


def _bindings(domain: Domain, problem: Problem, params):
    pools = [objects_of_type(domain, problem, p.type) for p in params]
    for combo in product(*pools):
        yield {p.name: obj for p, obj in zip(params, combo)}


def _changed_fluents(domain: Domain):
    """Names of predicates/functions that some effect can change."""
    preds: set[str] = set()
    funcs: set[str] = set()

    def eat_instant(e: InstantEffect):
        for l in e.lits:
            preds.add(l.prop.name)
        for a in e.assigns:
            funcs.add(a.fluent.name)

    for a in domain.actions:
        eat_instant(a.effect)
    for e in domain.events:
        eat_instant(e.effect)
    for d in domain.durative_actions:
        eat_instant(d.eff_start)
        eat_instant(d.eff_end)
        for c in d.eff_cont:
            funcs.add(c.fluent.name)
    for p in domain.processes:
        for c in p.effects:
            funcs.add(c.fluent.name)
    return preds, funcs


def ground_task(domain: Domain, problem: Problem) -> GroundTask:
    pool = list(domain.constants) + list(problem.objects)
    seen: set[str] = set()
    for name, _ in pool:
        if name in seen:
            raise GroundingError("object %r declared twice" % name)
        seen.add(name)

    changed_preds, changed_funcs = _changed_fluents(domain)
    static_preds = set(domain.predicates) - changed_preds

    init_true = set(problem.init_lits)
    static_values = {f: v for f, v in problem.init_values.items()
                     if f.name not in changed_funcs}
    simp = _Simplifier(static_values, init_true, static_preds)

    task = GroundTask(domain, problem)
    task.init_true = {p for p in init_true if p.name not in static_preds}

    def add_operator(kind: str, schema, binding: dict):
        gname = (schema.name,
                 tuple(binding[p.name] for p in schema.params))
        if kind == "action":
            pre = simp.condition(subst_condition(schema.precond, binding))
            if pre is None:
                return
            eff = simp.instant(subst_instant(schema.effect, binding))
            task.actions[gname] = Action(schema.name, (), pre, eff)
        elif kind == "event":
            pre = simp.condition(subst_condition(schema.precond, binding))
            if pre is None:
                return
            eff = simp.instant(subst_instant(schema.effect, binding))
            task.events[gname] = Event(schema.name, (), pre, eff)
        elif kind == "process":
            pre = simp.condition(subst_condition(schema.precond, binding))
            if pre is None:
                return
            effs = simp.continuous(tuple(subst_continuous(c, binding)
                                         for c in schema.effects))
            task.processes[gname] = Process(schema.name, (), pre, effs)
        else:
            cs = simp.condition(subst_condition(schema.cond_start, binding))
            co = simp.condition(subst_condition(schema.cond_over, binding))
            ce = simp.condition(subst_condition(schema.cond_end, binding))
            if cs is None or co is None or ce is None:
                return
            dur = tuple((op, simp.expr(expr_subst_params(expr, binding)))
                        for op, expr in schema.duration)
            es = simp.instant(subst_instant(schema.eff_start, binding))
            ee = simp.instant(subst_instant(schema.eff_end, binding))
            cont = simp.continuous(tuple(subst_continuous(c, binding)
                                         for c in schema.eff_cont))
            task.durative_actions[gname] = DurativeAction(
                schema.name, (), dur, cs, co, ce, es, ee, cont)

    for schema in domain.actions:
        for b in _bindings(domain, problem, schema.params):
            add_operator("action", schema, b)
    for schema in domain.events:
        for b in _bindings(domain, problem, schema.params):
            add_operator("event", schema, b)
    for schema in domain.processes:
        for b in _bindings(domain, problem, schema.params):
            add_operator("process", schema, b)
    for schema in domain.durative_actions:
        for b in _bindings(domain, problem, schema.params):
            add_operator("durative", schema, b)

    goal = simp.condition(problem.goal)
    if goal is None:
        # keep an explicit falsum so downstream reports unsatisfiability
        goal = (Comparison("<", Fraction(1), Fraction(0)),)
    task.goal = goal

    # collect the fluents in play
    def eat_condition(c: Condition):
        for p in c:
            if isinstance(p, Literal):
                task.bool_fluents.add(p.prop)
            else:
                task.num_fluents.update(expr_fluents(p.lhs))
                task.num_fluents.update(expr_fluents(p.rhs))

    def eat_instant(e: InstantEffect):
        for l in e.lits:
            task.bool_fluents.add(l.prop)
        for a in e.assigns:
            task.num_fluents.add(a.fluent)
            task.num_fluents.update(expr_fluents(a.expr))

    for a in task.actions.values():
        eat_condition(a.precond)
        eat_instant(a.effect)
    for e in task.events.values():
        eat_condition(e.precond)
        eat_instant(e.effect)
    for p in task.processes.values():
        eat_condition(p.precond)
        for c in p.effects:
            task.num_fluents.add(c.fluent)
            task.num_fluents.update(expr_fluents(c.expr))
    for d in task.durative_actions.values():
        for c in (d.cond_start, d.cond_over, d.cond_end):
            eat_condition(c)
        eat_instant(d.eff_start)
        eat_instant(d.eff_end)
        for c in d.eff_cont:
            task.num_fluents.add(c.fluent)
            task.num_fluents.update(expr_fluents(c.expr))
        for _, expr in d.duration:
            task.num_fluents.update(expr_fluents(expr))
    eat_condition(task.goal)

    for f in sorted(task.num_fluents, key=repr):
        if f in problem.init_values:
            task.init_values[f] = problem.init_values[f]
        else:
            raise GroundingError("numeric fluent %r has no initial value" % (f,))
    for p in task.init_true:
        if p.name not in domain.predicates:
            raise GroundingError("initial literal %r uses an undeclared"
                                 " predicate" % (p,))
    return task
