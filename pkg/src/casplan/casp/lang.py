"""Core language for constraint answer set programs.

A program is a list of rules over ground or non-ground atoms.  Three rule
shapes exist: normal rules ``h :- body`` (``h`` absent for a denial), facts,
and bounded choice rules ``lb { e1 : cond ; ... } ub :- body``.  Atoms whose
relation is ``required`` carry a reified numeric constraint in their single
argument; ``cspvar``/``cspdomain`` atoms declare constraint variables and the
value domain.  The mapping between constraint values and the atoms that name
them is the tau/tau_inverse pair below, and ``gamma`` projects an answer set
onto its constraint-denoting atoms.

Terms are immutable: Python ints and ``Fraction``s are numeric constants,
plain strings are symbolic constants, ``Var`` is a rule variable, and ``App``
is a compound term.  Arithmetic inside constraint payloads reuses ``App`` with
operator functors (``+ - * / sqrt``); everything else is an opaque term, so a
CSP variable reference is simply a non-arithmetic term such as ``tstart(1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Union


# ---------------------------------------------------------------------------
# Terms


@dataclass(frozen=True)
class Var:
    name: str

    def __repr__(self) -> str:
        return self.name


@dataclass(frozen=True)
class App:
    functor: str
    args: tuple = ()

    def __repr__(self) -> str:
        return render_term(self)


Term = Union[int, Fraction, float, str, Var, App]

ARITH_OPS = {"+", "-", "*", "/"}
COMPARISON_OPS = {"<", "<=", "=", "!=", ">=", ">"}

#: complement used when a constraint is asserted false (is_false atoms):
#: each comparison maps to its negation, an involution on operators.
COMPLEMENT = {"<": ">=", "<=": ">", "=": "!=", "!=": "=", ">=": "<", ">": "<="}


def app(functor: str, *args: Term) -> App:
    return App(functor, tuple(args))


def is_number(t: Term) -> bool:
    return isinstance(t, (int, Fraction, float)) and not isinstance(t, bool)


def is_arith(t: Term) -> bool:
    return isinstance(t, App) and (t.functor in ARITH_OPS or t.functor == "sqrt")


def term_vars(t: Term) -> set[str]:
    if isinstance(t, Var):
        return {t.name}
    if isinstance(t, App):
        out: set[str] = set()
        for a in t.args:
            out |= term_vars(a)
        return out
    return set()


def substitute(t: Term, binding: dict[str, Term]) -> Term:
    if isinstance(t, Var):
        return binding.get(t.name, t)
    if isinstance(t, App):
        return App(t.functor, tuple(substitute(a, binding) for a in t.args))
    return t


def term_key(t: Term):
    """Total deterministic ordering key over terms."""
    if is_number(t):
        return (0, 0, Fraction(t) if not isinstance(t, float) else Fraction(t))
    if isinstance(t, str):
        return (1, 0, t)
    if isinstance(t, Var):
        return (2, 0, t.name)
    return (3, t.functor, tuple(term_key(a) for a in t.args))


# ---------------------------------------------------------------------------
# Rendering


def render_number(x) -> str:
    if isinstance(x, bool):
        raise TypeError("boolean is not a term")
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        return format(x, ".17g") if x != int(x) else str(int(x))
    f = Fraction(x)
    if f.denominator == 1:
        return str(f.numerator)
    # decimal if the denominator is 2^a * 5^b, else a ratio
    d = f.denominator
    for p in (2, 5):
        while d % p == 0:
            d //= p
    if d == 1:
        s = format(float(f), ".17g")
        if Fraction(s) == f:
            return s
        # fall through for extreme precision cases
    return "%d/%d" % (f.numerator, f.denominator)


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def render_expr(t: Term, parent_prec: int = 0) -> str:
    """Render an arithmetic payload with minimal parentheses."""
    if is_number(t):
        s = render_number(t)
        if s.startswith("-") and parent_prec > 0:
            return "(%s)" % s
        return s
    if isinstance(t, App) and t.functor in ARITH_OPS and len(t.args) == 2:
        p = _PREC[t.functor]
        left = render_expr(t.args[0], p - 1)
        right = render_expr(t.args[1], p)
        s = "%s%s%s" % (left, t.functor, right)
        return "(%s)" % s if p <= parent_prec else s
    if isinstance(t, App) and t.functor == "sqrt" and len(t.args) == 1:
        return "sqrt(%s)" % render_expr(t.args[0], 0)
    return render_term(t)


def render_term(t: Term) -> str:
    if is_number(t):
        return render_number(t)
    if isinstance(t, str):
        return t
    if isinstance(t, Var):
        return t.name
    if isinstance(t, App):
        if t.functor in COMPARISON_OPS and len(t.args) == 2:
            return "%s %s %s" % (render_expr(t.args[0]), t.functor, render_expr(t.args[1]))
        if t.functor == "sum" and len(t.args) == 4:
            rel, pos, op, target = t.args
            return "sum([%s/%s], %s, %s)" % (render_term(rel), pos, op, render_term(target))
        if is_arith(t):
            return render_expr(t)
        if not t.args:
            return t.functor
        return "%s(%s)" % (t.functor, ",".join(render_term(a) for a in t.args))
    raise TypeError("not a term: %r" % (t,))


# ---------------------------------------------------------------------------
# Atoms and literals


Atom = App  # an atom is a compound term used at predicate position


@dataclass(frozen=True)
class Lit:
    """Classical literal: an atom or its strong negation."""

    atom: Atom
    neg: bool = False

    def complement(self) -> "Lit":
        return Lit(self.atom, not self.neg)

    def __repr__(self) -> str:
        return ("-" if self.neg else "") + render_term(self.atom)


@dataclass(frozen=True)
class Naf:
    """Body literal under default negation: ``not lit``."""

    lit: Lit

    def __repr__(self) -> str:
        return "not %s" % (self.lit,)


@dataclass(frozen=True)
class Builtin:
    """Arithmetic guard over rule variables, e.g. ``I2 = I1+1`` or ``X != Y``."""

    op: str  # one of = != < <= > >=
    lhs: Term
    rhs: Term

    def __repr__(self) -> str:
        return "%s %s %s" % (render_expr(self.lhs), self.op, render_expr(self.rhs))


BodyItem = Union[Lit, Naf, Builtin]


@dataclass(frozen=True)
class ChoiceElem:
    atom: Atom
    conds: tuple = ()  # tuple[BodyItem, ...], grounding-time conditions

    def __repr__(self) -> str:
        if not self.conds:
            return render_term(self.atom)
        return " : ".join([render_term(self.atom)] + [repr(c) for c in self.conds])


@dataclass(frozen=True)
class Choice:
    lower: int
    upper: Optional[int]
    elems: tuple = ()  # tuple[ChoiceElem, ...]


@dataclass
class Rule:
    """``head :- body``; head None = denial, head Choice = choice rule."""

    head: Union[Lit, Choice, None]
    body: tuple = ()
    comment: Optional[str] = None  # printed as a % line before the rule
    info: Optional[dict] = None  # provenance for program rewriters; not identity

    def key(self):
        return (_head_key(self.head), tuple(_body_key(b) for b in self.body))

    def __repr__(self) -> str:
        return render_rule(self)


def _head_key(h):
    if h is None:
        return (0,)
    if isinstance(h, Lit):
        return (1, h.neg, term_key(h.atom))
    ub = -1 if h.upper is None else h.upper
    return (2, h.lower, ub, tuple((term_key(e.atom), tuple(map(repr, e.conds))) for e in h.elems))


def _body_key(b):
    if isinstance(b, Lit):
        return (0, b.neg, term_key(b.atom))
    if isinstance(b, Naf):
        return (1, b.lit.neg, term_key(b.lit.atom))
    return (2, b.op, repr(b.lhs), repr(b.rhs))


def render_rule(r: Rule) -> str:
    if isinstance(r.head, Choice):
        inner = " ; ".join(repr(e) for e in r.head.elems)
        ub = "" if r.head.upper is None else " %d" % r.head.upper
        head = "%d { %s }%s" % (r.head.lower, inner, ub)
    elif r.head is None:
        head = ""
    else:
        head = repr(r.head)
    if not r.body:
        return head + "." if head else ":- ."
    body = ", ".join(repr(b) for b in r.body)
    if not head:
        return ":- %s." % body
    return "%s :- %s." % (head, body)


@dataclass
class Program:
    rules: list[Rule] = field(default_factory=list)

    def add(self, head, body=(), comment=None, info=None) -> Rule:
        r = Rule(head, tuple(body), comment, info)
        self.rules.append(r)
        return r

    def copy(self) -> "Program":
        return Program(list(self.rules))

    def dump(self) -> str:
        return program_text(self)


def program_text(p: Program) -> str:
    out = []
    for r in p.rules:
        if r.comment:
            out.append("%% %s" % r.comment)
        out.append(render_rule(r))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Constraint values and the tau mapping


@dataclass(frozen=True)
class Comparison:
    """``lhs op rhs`` over constraint variables, constants and + - * / sqrt."""

    op: str
    lhs: Term
    rhs: Term

    def __post_init__(self):
        if self.op not in COMPARISON_OPS:
            raise ValueError("unknown comparison operator %r" % (self.op,))

    def complement(self) -> "Comparison":
        return Comparison(COMPLEMENT[self.op], self.lhs, self.rhs)

    def __repr__(self) -> str:
        return "%s %s %s" % (render_expr(self.lhs), self.op, render_expr(self.rhs))


@dataclass(frozen=True)
class SumConstraint:
    """ezcsp-style aggregate: sum of argument ``pos`` of all ``rel(key, ...)``
    atoms in the answer set, compared against a target variable term."""

    rel: str
    key: Term
    pos: int
    op: str
    target: Term

    def __repr__(self) -> str:
        return "sum([%s(%s)/%d], %s, %s)" % (
            self.rel, render_term(self.key), self.pos, self.op, render_term(self.target))


Constraint = Union[Comparison, SumConstraint]


def tau(c: Constraint) -> Atom:
    """Name a constraint as an atom (embeddable under ``required``)."""
    if isinstance(c, Comparison):
        return App(c.op, (c.lhs, c.rhs))
    if isinstance(c, SumConstraint):
        return App("sum", (App(c.rel, (c.key,)), c.pos, c.op, c.target))
    raise TypeError("not a constraint: %r" % (c,))


def tau_inverse(a: Atom) -> Constraint:
    """Recover the constraint a constraint-denoting atom names."""
    if a.functor in COMPARISON_OPS and len(a.args) == 2:
        return Comparison(a.functor, a.args[0], a.args[1])
    if a.functor == "sum" and len(a.args) == 4:
        sel, pos, op, target = a.args
        if isinstance(sel, App) and len(sel.args) == 1 and isinstance(pos, int):
            return SumConstraint(sel.functor, sel.args[0], pos, op, target)
    raise ValueError("not a constraint-denoting atom: %s" % render_term(a))


def required(c: Constraint) -> Lit:
    return Lit(App("required", (tau(c),)))


def gamma(answer_set: Iterable[Lit]) -> list[Atom]:
    """Constraint-denoting atoms of an answer set: the payloads of its
    positive ``required`` atoms, in deterministic order."""
    out = [l.atom.args[0] for l in answer_set
           if not l.neg and l.atom.functor == "required" and len(l.atom.args) == 1]
    out.sort(key=term_key)
    return out


def fingerprint(answer_set: Iterable[Lit], relations=("occurs", "is_false")) -> tuple:
    """Projection of an answer set used for solution blocking."""
    sel = [repr(l) for l in answer_set if not l.neg and l.atom.functor in relations]
    return tuple(sorted(sel))
