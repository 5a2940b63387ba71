"""Parser for PDDL+ domain and problem files.

Two layers: an s-expression reader that keeps line/column positions, and an
interpreter that builds :mod:`casplan.pddl.model` objects with declaration
and arity checking.  All symbols are case-insensitive and normalised to
lowercase.  Errors are reported as ``file:line:col: message``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union

from .model import (Action, Comparison, Condition, ContinuousEffect, Domain,
                    DurativeAction, Event, FluentRef, InstantEffect, Literal,
                    NumAssign, NumExpr, NumOp, Parameter, Process, Proposition,
                    Problem, TimeVar, expr_has_time)


class ParseError(Exception):
    def __init__(self, message: str, filename: str = "<input>", line: int = 0, col: int = 0):
        self.message = message
        self.filename = filename
        self.line = line
        self.col = col
        super().__init__("%s:%d:%d: %s" % (filename, line, col, message))


# ---------------------------------------------------------------------------
# S-expression layer


@dataclass(frozen=True)
class SAtom:
    text: str
    line: int
    col: int


@dataclass(frozen=True)
class SList:
    items: tuple
    line: int
    col: int


SNode = Union[SAtom, SList]

_TOKEN = re.compile(r"[()]|[^\s();]+")
_NUMBER = re.compile(r"^[+-]?(\d+)(\.\d+)?$")


def _tokenize(text: str):
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split(";", 1)[0]
        for m in _TOKEN.finditer(body):
            yield m.group(0), lineno, m.start() + 1
    yield None, len(text.splitlines()) + 1, 1


def read_sexprs(text: str, filename: str) -> list[SNode]:
    stack: list[list] = [[]]
    positions: list[tuple[int, int]] = []
    for tok, line, col in _tokenize(text):
        if tok is None:
            if positions:
                l, c = positions[-1]
                raise ParseError("unclosed '('", filename, l, c)
            break
        if tok == "(":
            stack.append([])
            positions.append((line, col))
        elif tok == ")":
            if len(stack) == 1:
                raise ParseError("unmatched ')'", filename, line, col)
            items = stack.pop()
            l, c = positions.pop()
            stack[-1].append(SList(tuple(items), l, c))
        else:
            text_norm = tok if tok == "#t" else tok.lower()
            stack[-1].append(SAtom(text_norm, line, col))
    return stack[0]


# ---------------------------------------------------------------------------
# Interpretation helpers


def _err(msg: str, filename: str, node: SNode) -> ParseError:
    return ParseError(msg, filename, node.line, node.col)


def _atom_text(node: SNode, filename: str, what: str) -> str:
    if not isinstance(node, SAtom):
        raise _err("expected %s, found a list" % what, filename, node)
    return node.text


def _typed_list(items, filename) -> list[tuple[str, str]]:
    """Parse ``a b - t c d - u e`` into name/type pairs (default object)."""
    out: list[tuple[str, str]] = []
    pending: list[str] = []
    i = 0
    while i < len(items):
        text = _atom_text(items[i], filename, "a name")
        if text == "-":
            if i + 1 >= len(items):
                raise _err("missing type after '-'", filename, items[i])
            t = _atom_text(items[i + 1], filename, "a type name")
            if not pending:
                raise _err("type %r declared for an empty name list" % t,
                           filename, items[i])
            out.extend((n, t) for n in pending)
            pending = []
            i += 2
        else:
            pending.append(text)
            i += 1
    out.extend((n, "object") for n in pending)
    return out


def _params(node: SNode, filename: str) -> tuple:
    if not isinstance(node, SList):
        raise _err("expected a parameter list", filename, node)
    pairs = _typed_list(node.items, filename)
    for name, _ in pairs:
        if not name.startswith("?"):
            raise _err("parameter %r must start with '?'" % name, filename, node)
    return tuple(Parameter(n, t) for n, t in pairs)


_CMP_OPS = {"<", "<=", "=", ">=", ">"}


class _DomainContext:
    """Declared predicates/functions and the current parameter scope."""

    def __init__(self, domain: Domain, filename: str):
        self.domain = domain
        self.filename = filename
        self.scope: dict[str, str] = {}  # ?name -> type

    def check_var(self, name: str, node: SNode) -> None:
        if name not in self.scope:
            raise _err("unbound variable %r" % name, self.filename, node)

    def check_pred(self, name: str, nargs: int, node: SNode) -> None:
        if name not in self.domain.predicates:
            raise _err("undeclared predicate %r" % name, self.filename, node)
        want = len(self.domain.predicates[name])
        if nargs != want:
            raise _err("predicate %r takes %d argument(s), got %d"
                       % (name, want, nargs), self.filename, node)

    def check_func(self, name: str, nargs: int, node: SNode) -> None:
        if name not in self.domain.functions:
            raise _err("undeclared numeric fluent %r" % name, self.filename, node)
        want = len(self.domain.functions[name])
        if nargs != want:
            raise _err("numeric fluent %r takes %d argument(s), got %d"
                       % (name, want, nargs), self.filename, node)


def _term_args(items, ctx: _DomainContext) -> tuple:
    out = []
    for it in items:
        text = _atom_text(it, ctx.filename, "an argument")
        if text.startswith("?"):
            ctx.check_var(text, it)
        out.append(text)
    return tuple(out)


def parse_num_expr(node: SNode, ctx: _DomainContext, allow_time: bool) -> NumExpr:
    if isinstance(node, SAtom):
        if node.text == "#t":
            if not allow_time:
                raise _err("#t is only allowed in continuous effects",
                           ctx.filename, node)
            return TimeVar()
        if _NUMBER.match(node.text):
            return Fraction(node.text)
        if node.text == "?duration":
            raise _err("?duration may only appear in a :duration constraint",
                       ctx.filename, node)
        raise _err("expected a numeric expression, found %r" % node.text,
                   ctx.filename, node)
    items = node.items
    if not items:
        raise _err("empty numeric expression", ctx.filename, node)
    if len(items) == 1 and isinstance(items[0], SAtom) and _NUMBER.match(items[0].text):
        return Fraction(items[0].text)
    head = _atom_text(items[0], ctx.filename, "an operator or fluent name")
    if head in "+-*/":
        args = [parse_num_expr(x, ctx, allow_time) for x in items[1:]]
        if head == "-" and len(args) == 1:
            return NumOp("-", Fraction(0), args[0])
        if len(args) < 2:
            raise _err("operator %r needs two arguments" % head, ctx.filename, node)
        if head in "-/" and len(args) > 2:
            raise _err("operator %r is binary" % head, ctx.filename, node)
        acc = args[0]
        for a in args[1:]:
            acc = NumOp(head, acc, a)
        return acc
    ctx.check_func(head, len(items) - 1, node)
    return FluentRef(head, _term_args(items[1:], ctx))


def _parse_prop(node: SList, ctx: _DomainContext) -> Proposition:
    head = _atom_text(node.items[0], ctx.filename, "a predicate name")
    ctx.check_pred(head, len(node.items) - 1, node)
    return Proposition(head, _term_args(node.items[1:], ctx))


def parse_condition(node: SNode, ctx: _DomainContext) -> Condition:
    """A flat conjunction of literals and comparisons."""
    if isinstance(node, SAtom):
        raise _err("expected a condition, found %r" % node.text, ctx.filename, node)
    if not node.items:
        return ()
    head = node.items[0]
    if isinstance(head, SAtom) and head.text == "and":
        parts: list = []
        for sub in node.items[1:]:
            parts.extend(parse_condition(sub, ctx))
        return tuple(parts)
    if isinstance(head, SAtom) and head.text == "not":
        if len(node.items) != 2 or not isinstance(node.items[1], SList):
            raise _err("(not ...) takes one propositional argument",
                       ctx.filename, node)
        return (Literal(_parse_prop(node.items[1], ctx), positive=False),)
    if isinstance(head, SAtom) and head.text in _CMP_OPS:
        if len(node.items) != 3:
            raise _err("comparison %r takes two arguments" % head.text,
                       ctx.filename, node)
        lhs = parse_num_expr(node.items[1], ctx, allow_time=False)
        rhs = parse_num_expr(node.items[2], ctx, allow_time=False)
        return (Comparison(head.text, lhs, rhs),)
    if isinstance(head, SAtom):
        return (Literal(_parse_prop(node, ctx)),)
    raise _err("malformed condition", ctx.filename, node)


_ASSIGN_KINDS = {"assign", "increase", "decrease"}


def parse_instant_effect(node: SNode, ctx: _DomainContext) -> InstantEffect:
    lits: list[Literal] = []
    assigns: list[NumAssign] = []

    def walk(n: SNode) -> None:
        if isinstance(n, SAtom):
            raise _err("expected an effect, found %r" % n.text, ctx.filename, n)
        if not n.items:
            return
        head = n.items[0]
        if isinstance(head, SAtom) and head.text == "and":
            for sub in n.items[1:]:
                walk(sub)
            return
        if isinstance(head, SAtom) and head.text == "not":
            if len(n.items) != 2 or not isinstance(n.items[1], SList):
                raise _err("(not ...) takes one propositional argument",
                           ctx.filename, n)
            lits.append(Literal(_parse_prop(n.items[1], ctx), positive=False))
            return
        if isinstance(head, SAtom) and head.text in _ASSIGN_KINDS:
            if len(n.items) != 3 or not isinstance(n.items[1], SList):
                raise _err("(%s ...) takes a fluent and an expression" % head.text,
                           ctx.filename, n)
            fl = parse_num_expr(n.items[1], ctx, allow_time=False)
            if not isinstance(fl, FluentRef):
                raise _err("first argument of %s must be a numeric fluent"
                           % head.text, ctx.filename, n.items[1])
            expr = parse_num_expr(n.items[2], ctx, allow_time=False)
            assigns.append(NumAssign(head.text, fl, expr))
            return
        if isinstance(head, SAtom):
            lits.append(Literal(_parse_prop(n, ctx)))
            return
        raise _err("malformed effect", ctx.filename, n)

    walk(node)
    return InstantEffect(tuple(lits), tuple(assigns))


def _parse_continuous(node: SList, ctx: _DomainContext) -> ContinuousEffect:
    head = _atom_text(node.items[0], ctx.filename, "increase or decrease")
    if head not in ("increase", "decrease") or len(node.items) != 3:
        raise _err("continuous effect must be (increase|decrease fluent expr)",
                   ctx.filename, node)
    fl = parse_num_expr(node.items[1], ctx, allow_time=False)
    if not isinstance(fl, FluentRef):
        raise _err("first argument must be a numeric fluent", ctx.filename, node)
    expr = parse_num_expr(node.items[2], ctx, allow_time=True)
    if not expr_has_time(expr):
        raise _err("continuous effect must mention #t", ctx.filename, node)
    return ContinuousEffect(head, fl, expr)


def _parse_continuous_block(node: SNode, ctx: _DomainContext) -> list[ContinuousEffect]:
    if not isinstance(node, SList) or not node.items:
        raise _err("expected a continuous effect", ctx.filename, node)
    head = node.items[0]
    if isinstance(head, SAtom) and head.text == "and":
        out: list[ContinuousEffect] = []
        for sub in node.items[1:]:
            out.extend(_parse_continuous_block(sub, ctx))
        return out
    return [_parse_continuous(node, ctx)]


# ---------------------------------------------------------------------------
# Durative pieces


def _durative_condition(node: SNode, ctx: _DomainContext):
    start: list = []
    over: list = []
    end: list = []

    def walk(n: SNode) -> None:
        if not isinstance(n, SList) or not n.items:
            if isinstance(n, SList) and not n.items:
                return
            raise _err("expected a timed condition", ctx.filename, n)
        head = n.items[0]
        if isinstance(head, SAtom) and head.text == "and":
            for sub in n.items[1:]:
                walk(sub)
            return
        if isinstance(head, SAtom) and head.text in ("at", "over"):
            if len(n.items) != 3 or not isinstance(n.items[1], SAtom):
                raise _err("expected (at start ...), (at end ...) or (over all ...)",
                           ctx.filename, n)
            when = n.items[1].text
            cond = parse_condition(n.items[2], ctx)
            if head.text == "at" and when == "start":
                start.extend(cond)
            elif head.text == "at" and when == "end":
                end.extend(cond)
            elif head.text == "over" and when == "all":
                over.extend(cond)
            else:
                raise _err("unknown condition time %r %r" % (head.text, when),
                           ctx.filename, n)
            return
        if isinstance(head, SAtom) and head.text == "overall":
            if len(n.items) != 2:
                raise _err("(overall ...) takes one condition", ctx.filename, n)
            over.extend(parse_condition(n.items[1], ctx))
            return
        raise _err("durative conditions must be wrapped in at start / over all"
                   " / at end", ctx.filename, n)

    walk(node)
    return tuple(start), tuple(over), tuple(end)


def _durative_effect(node: SNode, ctx: _DomainContext):
    eff_start: list[InstantEffect] = []
    eff_end: list[InstantEffect] = []
    cont: list[ContinuousEffect] = []

    def walk(n: SNode) -> None:
        if not isinstance(n, SList) or not n.items:
            if isinstance(n, SList) and not n.items:
                return
            raise _err("expected a durative effect", ctx.filename, n)
        head = n.items[0]
        if isinstance(head, SAtom) and head.text == "and":
            for sub in n.items[1:]:
                walk(sub)
            return
        if isinstance(head, SAtom) and head.text == "at":
            if len(n.items) != 3 or not isinstance(n.items[1], SAtom):
                raise _err("expected (at start ...) or (at end ...)", ctx.filename, n)
            when = n.items[1].text
            eff = parse_instant_effect(n.items[2], ctx)
            if when == "start":
                eff_start.append(eff)
            elif when == "end":
                eff_end.append(eff)
            else:
                raise _err("unknown effect time %r" % when, ctx.filename, n)
            return
        cont.extend(_parse_continuous_block(n, ctx))

    walk(node)

    def merge(parts: list[InstantEffect]) -> InstantEffect:
        lits: list = []
        assigns: list = []
        for p in parts:
            lits.extend(p.lits)
            assigns.extend(p.assigns)
        return InstantEffect(tuple(lits), tuple(assigns))

    return merge(eff_start), merge(eff_end), tuple(cont)


def _duration_spec(node: SNode, ctx: _DomainContext) -> tuple:
    def one(n: SNode):
        if not isinstance(n, SList) or len(n.items) != 3:
            raise _err("duration constraint must be (op ?duration expr)",
                       ctx.filename, n)
        op = _atom_text(n.items[0], ctx.filename, "a comparison operator")
        if op not in ("=", "<=", ">="):
            raise _err("duration constraint operator must be =, <= or >=",
                       ctx.filename, n)
        dvar = n.items[1]
        if not (isinstance(dvar, SAtom) and dvar.text == "?duration"):
            raise _err("duration constraint must compare ?duration", ctx.filename, n)
        expr = parse_num_expr(n.items[2], ctx, allow_time=False)
        return (op, expr)

    if isinstance(node, SList) and node.items \
            and isinstance(node.items[0], SAtom) and node.items[0].text == "and":
        return tuple(one(sub) for sub in node.items[1:])
    return (one(node),)


# ---------------------------------------------------------------------------
# Domain and problem


def _sections(items, filename: str) -> dict:
    """Keyword-introduced sections of an :action-like body."""
    out: dict[str, SNode] = {}
    i = 0
    while i < len(items):
        key = _atom_text(items[i], filename, "a ':keyword'")
        if not key.startswith(":"):
            raise _err("expected a ':keyword', found %r" % key, filename, items[i])
        if i + 1 >= len(items):
            raise _err("missing value after %r" % key, filename, items[i])
        if key in out:
            raise _err("duplicate section %r" % key, filename, items[i])
        out[key] = items[i + 1]
        i += 2
    return out


def _declare_fluents(node: SNode, filename: str) -> dict:
    out: dict[str, tuple] = {}
    if not isinstance(node, SList):
        raise _err("expected a declaration list", filename, node)
    for it in node.items:
        if not isinstance(it, SList) or not it.items:
            raise _err("expected a declaration like (name ?x - t)", filename, it)
        name = _atom_text(it.items[0], filename, "a name")
        pairs = _typed_list(it.items[1:], filename)
        out[name] = tuple(Parameter(n, t) for n, t in pairs)
    return out


def _with_scope(ctx: _DomainContext, params) -> None:
    ctx.scope = {p.name: p.type for p in params}
    for p in params:
        if p.type != "object" and p.type not in ctx.domain.types:
            raise ParseError("undeclared type %r" % p.type, ctx.filename)


def parse_domain_text(text: str, filename: str = "<domain>") -> Domain:
    top = read_sexprs(text, filename)
    if len(top) != 1 or not isinstance(top[0], SList):
        raise ParseError("expected a single (define ...) form", filename, 1, 1)
    items = top[0].items
    if not items or _atom_text(items[0], filename, "define") != "define":
        raise _err("expected (define (domain ...) ...)", filename, top[0])
    hd = items[1] if len(items) > 1 else None
    if not (isinstance(hd, SList) and len(hd.items) == 2
            and _atom_text(hd.items[0], filename, "domain") == "domain"):
        raise _err("expected (domain NAME)", filename, top[0])
    domain = Domain(name=_atom_text(hd.items[1], filename, "the domain name"))
    ctx = _DomainContext(domain, filename)

    for sec in items[2:]:
        if not isinstance(sec, SList) or not sec.items:
            raise _err("expected a (:section ...) form", filename, sec)
        key = _atom_text(sec.items[0], filename, "a section keyword")
        rest = sec.items[1:]
        if key == ":requirements":
            domain.requirements = tuple(_atom_text(x, filename, "a requirement")
                                        for x in rest)
        elif key == ":types":
            for name, parent in _typed_list(rest, filename):
                domain.types[name] = None if parent == "object" else parent
                if parent != "object" and parent not in domain.types:
                    domain.types[parent] = None
        elif key == ":constants":
            domain.constants = _typed_list(rest, filename)
        elif key == ":predicates":
            domain.predicates = _declare_fluents(SList(rest, sec.line, sec.col),
                                                 filename)
        elif key == ":functions":
            domain.functions = _declare_fluents(SList(rest, sec.line, sec.col),
                                                filename)
        elif key in (":action", ":durative-action", ":process", ":event"):
            name = _atom_text(rest[0], filename, "a schema name") if rest else None
            if name is None:
                raise _err("missing schema name", filename, sec)
            body = _sections(rest[1:], filename)
            params = _params(body[":parameters"], filename) \
                if ":parameters" in body else ()
            _with_scope(ctx, params)
            if key == ":action":
                pre = parse_condition(body[":precondition"], ctx) \
                    if ":precondition" in body else ()
                eff = parse_instant_effect(body[":effect"], ctx) \
                    if ":effect" in body else InstantEffect()
                domain.actions.append(Action(name, params, pre, eff))
            elif key == ":event":
                if ":precondition" not in body:
                    raise _err("event %r needs a :precondition" % name, filename, sec)
                pre = parse_condition(body[":precondition"], ctx)
                eff = parse_instant_effect(body[":effect"], ctx) \
                    if ":effect" in body else InstantEffect()
                domain.events.append(Event(name, params, pre, eff))
            elif key == ":process":
                if ":precondition" not in body:
                    raise _err("process %r needs a :precondition" % name,
                               filename, sec)
                pre = parse_condition(body[":precondition"], ctx)
                if ":effect" not in body:
                    raise _err("process %r needs a continuous :effect" % name,
                               filename, sec)
                eff = tuple(_parse_continuous_block(body[":effect"], ctx))
                domain.processes.append(Process(name, params, pre, eff))
            else:
                if ":duration" not in body:
                    raise _err("durative action %r needs a :duration" % name,
                               filename, sec)
                dur = _duration_spec(body[":duration"], ctx)
                cs, co, ce = _durative_condition(body[":condition"], ctx) \
                    if ":condition" in body else ((), (), ())
                es, ee, cont = _durative_effect(body[":effect"], ctx) \
                    if ":effect" in body else (InstantEffect(), InstantEffect(), ())
                domain.durative_actions.append(
                    DurativeAction(name, params, dur, cs, co, ce, es, ee, cont))
        else:
            raise _err("unknown domain section %r" % key, filename, sec)
    return domain


def parse_problem_text(text: str, domain: Domain,
                       filename: str = "<problem>") -> Problem:
    top = read_sexprs(text, filename)
    if len(top) != 1 or not isinstance(top[0], SList):
        raise ParseError("expected a single (define ...) form", filename, 1, 1)
    items = top[0].items
    if not items or _atom_text(items[0], filename, "define") != "define":
        raise _err("expected (define (problem ...) ...)", filename, top[0])
    hd = items[1] if len(items) > 1 else None
    if not (isinstance(hd, SList) and len(hd.items) == 2
            and _atom_text(hd.items[0], filename, "problem") == "problem"):
        raise _err("expected (problem NAME)", filename, top[0])
    problem = Problem(name=_atom_text(hd.items[1], filename, "the problem name"),
                      domain_name="")
    ctx = _DomainContext(domain, filename)
    ctx.scope = {}

    for sec in items[2:]:
        if not isinstance(sec, SList) or not sec.items:
            raise _err("expected a (:section ...) form", filename, sec)
        key = _atom_text(sec.items[0], filename, "a section keyword")
        rest = sec.items[1:]
        if key == ":domain":
            problem.domain_name = _atom_text(rest[0], filename, "the domain name")
            if problem.domain_name != domain.name:
                raise _err("problem requires domain %r but %r was given"
                           % (problem.domain_name, domain.name), filename, sec)
        elif key == ":objects":
            problem.objects = _typed_list(rest, filename)
            for _, t in problem.objects:
                if t != "object" and t not in domain.types:
                    raise _err("undeclared type %r" % t, filename, sec)
        elif key == ":init":
            for it in rest:
                if not isinstance(it, SList) or not it.items:
                    raise _err("malformed :init entry", filename, it)
                head = _atom_text(it.items[0], filename, "a predicate or '='")
                if head == "=":
                    if len(it.items) != 3 or not isinstance(it.items[1], SList):
                        raise _err("numeric init must be (= (fluent ...) number)",
                                   filename, it)
                    fl = parse_num_expr(it.items[1], ctx, allow_time=False)
                    val = parse_num_expr(it.items[2], ctx, allow_time=False)
                    if not isinstance(fl, FluentRef) or not isinstance(val, Fraction):
                        raise _err("numeric init must be (= (fluent ...) number)",
                                   filename, it)
                    problem.init_values[fl] = val
                else:
                    problem.init_lits = problem.init_lits + (_parse_prop(it, ctx),)
        elif key == ":goal":
            problem.goal = parse_condition(rest[0], ctx) if rest else ()
        elif key == ":metric":
            pass  # objective functions are not used by the planner
        else:
            raise _err("unknown problem section %r" % key, filename, sec)
    if not problem.domain_name:
        raise _err("problem is missing its (:domain ...) section", filename, top[0])
    return problem


def parse_domain(path: str) -> Domain:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_domain_text(fh.read(), path)


def parse_problem(path: str, domain: Domain) -> Problem:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_problem_text(fh.read(), domain, path)
