"""In-memory model of PDDL+ domains and problems.

Numeric expressions are immutable trees over rational constants, numeric
fluent references, the continuous-time symbol ``#t`` and the four arithmetic
operators.  Conditions are flat conjunctions of propositional literals and
numeric comparisons.  Schemas cover instantaneous actions, durative actions,
processes and events; processes and durative actions may carry continuous
effects whose expressions mention ``#t``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Optional, Union


# ---------------------------------------------------------------------------
# Numeric expressions


@dataclass(frozen=True)
class FluentRef:
    name: str
    args: tuple = ()  # object names, or ?parameters before instantiation

    def __repr__(self) -> str:
        if not self.args:
            return "(%s)" % self.name
        return "(%s %s)" % (self.name, " ".join(self.args))


@dataclass(frozen=True)
class TimeVar:
    """The continuous-time symbol ``#t`` inside a continuous effect."""

    def __repr__(self) -> str:
        return "#t"


@dataclass(frozen=True)
class NumOp:
    op: str  # + - * /
    lhs: "NumExpr"
    rhs: "NumExpr"

    def __repr__(self) -> str:
        return "(%s %r %r)" % (self.op, self.lhs, self.rhs)


NumExpr = Union[Fraction, FluentRef, TimeVar, NumOp]


def expr_fluents(e: NumExpr) -> set[FluentRef]:
    if isinstance(e, FluentRef):
        return {e}
    if isinstance(e, NumOp):
        return expr_fluents(e.lhs) | expr_fluents(e.rhs)
    return set()


def expr_has_time(e: NumExpr) -> bool:
    if isinstance(e, TimeVar):
        return True
    if isinstance(e, NumOp):
        return expr_has_time(e.lhs) or expr_has_time(e.rhs)
    return False


def expr_subst_params(e: NumExpr, binding: dict[str, str]) -> NumExpr:
    if isinstance(e, FluentRef):
        return FluentRef(e.name, tuple(binding.get(a, a) for a in e.args))
    if isinstance(e, NumOp):
        return NumOp(e.op, expr_subst_params(e.lhs, binding),
                     expr_subst_params(e.rhs, binding))
    return e


def eval_expr(e: NumExpr, lookup: Callable[[FluentRef], Fraction],
              tval: Optional[Fraction] = None) -> Fraction:
    if isinstance(e, Fraction):
        return e
    if isinstance(e, FluentRef):
        return lookup(e)
    if isinstance(e, TimeVar):
        if tval is None:
            raise ValueError("#t outside a continuous effect")
        return tval
    l = eval_expr(e.lhs, lookup, tval)
    r = eval_expr(e.rhs, lookup, tval)
    if e.op == "+":
        return l + r
    if e.op == "-":
        return l - r
    if e.op == "*":
        return l * r
    if e.op == "/":
        if r == 0:
            raise ZeroDivisionError("division by zero in %r" % (e,))
        return l / r
    raise ValueError("unknown operator %r" % (e.op,))


def diff_time(e: NumExpr) -> NumExpr:
    """d/d#t with fluent references treated as constants."""
    if isinstance(e, TimeVar):
        return Fraction(1)
    if isinstance(e, (Fraction, FluentRef)):
        return Fraction(0)
    dl, dr = diff_time(e.lhs), diff_time(e.rhs)
    if e.op in "+-":
        return NumOp(e.op, dl, dr)
    if e.op == "*":
        return NumOp("+", NumOp("*", dl, e.rhs), NumOp("*", e.lhs, dr))
    # quotient rule
    num = NumOp("-", NumOp("*", dl, e.rhs), NumOp("*", e.lhs, dr))
    return NumOp("/", num, NumOp("*", e.rhs, e.rhs))


def expr_subst_time(e: NumExpr, rep: NumExpr) -> NumExpr:
    if isinstance(e, TimeVar):
        return rep
    if isinstance(e, NumOp):
        return NumOp(e.op, expr_subst_time(e.lhs, rep), expr_subst_time(e.rhs, rep))
    return e


def render_expr(e: NumExpr) -> str:
    if isinstance(e, Fraction):
        if e.denominator == 1:
            return str(e.numerator)
        return "(/ %d %d)" % (e.numerator, e.denominator)
    if isinstance(e, FluentRef):
        return repr(e)
    if isinstance(e, TimeVar):
        return "#t"
    return "(%s %s %s)" % (e.op, render_expr(e.lhs), render_expr(e.rhs))


# ---------------------------------------------------------------------------
# Conditions


@dataclass(frozen=True)
class Proposition:
    name: str
    args: tuple = ()

    def __repr__(self) -> str:
        if not self.args:
            return "(%s)" % self.name
        return "(%s %s)" % (self.name, " ".join(self.args))


@dataclass(frozen=True)
class Literal:
    prop: Proposition
    positive: bool = True

    def __repr__(self) -> str:
        return repr(self.prop) if self.positive else "(not %r)" % (self.prop,)


@dataclass(frozen=True)
class Comparison:
    op: str  # < <= = >= >
    lhs: NumExpr
    rhs: NumExpr

    def __repr__(self) -> str:
        return "(%s %s %s)" % (self.op, render_expr(self.lhs), render_expr(self.rhs))


ConditionPart = Union[Literal, Comparison]
Condition = tuple  # tuple[ConditionPart, ...] — a flat conjunction


def condition_literals(c: Condition) -> list[Literal]:
    return [p for p in c if isinstance(p, Literal)]


def condition_comparisons(c: Condition) -> list[Comparison]:
    return [p for p in c if isinstance(p, Comparison)]


def subst_condition(c: Condition, binding: dict[str, str]) -> Condition:
    out = []
    for p in c:
        if isinstance(p, Literal):
            prop = Proposition(p.prop.name,
                               tuple(binding.get(a, a) for a in p.prop.args))
            out.append(Literal(prop, p.positive))
        else:
            out.append(Comparison(p.op, expr_subst_params(p.lhs, binding),
                                  expr_subst_params(p.rhs, binding)))
    return tuple(out)


# ---------------------------------------------------------------------------
# Effects


@dataclass(frozen=True)
class NumAssign:
    kind: str  # assign | increase | decrease
    fluent: FluentRef
    expr: NumExpr

    def __repr__(self) -> str:
        return "(%s %r %s)" % (self.kind, self.fluent, render_expr(self.expr))


@dataclass(frozen=True)
class InstantEffect:
    lits: tuple = ()  # tuple[Literal, ...]
    assigns: tuple = ()  # tuple[NumAssign, ...]

    def is_empty(self) -> bool:
        return not self.lits and not self.assigns


@dataclass(frozen=True)
class ContinuousEffect:
    kind: str  # increase | decrease
    fluent: FluentRef
    expr: NumExpr  # mentions #t

    def __repr__(self) -> str:
        return "(%s %r %s)" % (self.kind, self.fluent, render_expr(self.expr))


def subst_assign(a: NumAssign, binding: dict[str, str]) -> NumAssign:
    return NumAssign(a.kind,
                     FluentRef(a.fluent.name,
                               tuple(binding.get(x, x) for x in a.fluent.args)),
                     expr_subst_params(a.expr, binding))


def subst_instant(e: InstantEffect, binding: dict[str, str]) -> InstantEffect:
    lits = tuple(Literal(Proposition(l.prop.name,
                                     tuple(binding.get(a, a) for a in l.prop.args)),
                         l.positive) for l in e.lits)
    return InstantEffect(lits, tuple(subst_assign(a, binding) for a in e.assigns))


def subst_continuous(e: ContinuousEffect, binding: dict[str, str]) -> ContinuousEffect:
    return ContinuousEffect(e.kind,
                            FluentRef(e.fluent.name,
                                      tuple(binding.get(x, x) for x in e.fluent.args)),
                            expr_subst_params(e.expr, binding))


# ---------------------------------------------------------------------------
# Schemas


@dataclass(frozen=True)
class Parameter:
    name: str  # includes the leading '?'
    type: str = "object"


@dataclass(frozen=True)
class Action:
    name: str
    params: tuple = ()  # tuple[Parameter, ...]
    precond: Condition = ()
    effect: InstantEffect = InstantEffect()


@dataclass(frozen=True)
class DurativeAction:
    name: str
    params: tuple = ()
    duration: tuple = ()  # tuple[(op, NumExpr), ...] constraints on ?duration
    cond_start: Condition = ()
    cond_over: Condition = ()
    cond_end: Condition = ()
    eff_start: InstantEffect = InstantEffect()
    eff_end: InstantEffect = InstantEffect()
    eff_cont: tuple = ()  # tuple[ContinuousEffect, ...]


@dataclass(frozen=True)
class Process:
    name: str
    params: tuple = ()
    precond: Condition = ()
    effects: tuple = ()  # tuple[ContinuousEffect, ...]


@dataclass(frozen=True)
class Event:
    name: str
    params: tuple = ()
    precond: Condition = ()
    effect: InstantEffect = InstantEffect()


@dataclass
class Domain:
    name: str
    requirements: tuple = ()
    types: dict = field(default_factory=dict)  # type -> parent
    predicates: dict = field(default_factory=dict)  # name -> tuple[Parameter]
    functions: dict = field(default_factory=dict)  # name -> tuple[Parameter]
    actions: list = field(default_factory=list)
    durative_actions: list = field(default_factory=list)
    processes: list = field(default_factory=list)
    events: list = field(default_factory=list)
    constants: list = field(default_factory=list)  # list[(name, type)]

    def schema(self, name: str):
        for group in (self.actions, self.durative_actions, self.processes, self.events):
            for s in group:
                if s.name == name:
                    return s
        raise KeyError("no schema named %r" % name)


@dataclass
class Problem:
    name: str
    domain_name: str
    objects: list = field(default_factory=list)  # list[(name, type)]
    init_lits: tuple = ()  # tuple[Proposition, ...] (positives only)
    init_values: dict = field(default_factory=dict)  # FluentRef -> Fraction
    goal: Condition = ()


def type_matches(types: dict, obj_type: str, wanted: str) -> bool:
    if wanted == "object":
        return True
    t = obj_type
    seen = set()
    while t is not None and t not in seen:
        if t == wanted:
            return True
        seen.add(t)
        t = types.get(t)
    return False


def objects_of_type(domain: Domain, problem: Problem, wanted: str) -> list[str]:
    pool = list(domain.constants) + list(problem.objects)
    return [name for name, t in pool if type_matches(domain.types, t, wanted)]
