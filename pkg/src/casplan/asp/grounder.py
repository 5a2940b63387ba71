"""Grounder for answer-set programs.

Bottom-up instantiation to a fixpoint over *possible* atoms: a literal is
possible if some rule can derive it when its positive body is read over the
possible set (default negation ignored, builtin guards evaluated).  Rule
instances are emitted along the way; afterwards, default-negated literals
whose target is impossible are dropped as trivially true, and choice-element
conditions are resolved against atoms that hold in every model.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from ..casp.lang import (App, Builtin, Choice, ChoiceElem, Lit, Naf, Program,
                         Rule, Term, Var, is_number, render_rule, substitute,
                         term_vars)


class GroundingError(Exception):
    pass


@dataclass
class GroundProgram:
    program: Program
    possible: frozenset  # frozenset[Lit]
    certain: frozenset  # frozenset[Lit] — true in every model


# ---------------------------------------------------------------------------
# Term matching and builtin evaluation


def match_term(pattern: Term, ground: Term, binding: dict):
    if isinstance(pattern, Var):
        bound = binding.get(pattern.name)
        if bound is None:
            binding = dict(binding)
            binding[pattern.name] = ground
            return binding
        return binding if bound == ground else None
    if isinstance(pattern, App):
        if not isinstance(ground, App) or pattern.functor != ground.functor \
                or len(pattern.args) != len(ground.args):
            return None
        for p, g in zip(pattern.args, ground.args):
            binding = match_term(p, g, binding)
            if binding is None:
                return None
        return binding
    if is_number(pattern) and is_number(ground):
        return binding if Fraction(pattern) == Fraction(ground) else None
    return binding if pattern == ground else None


def eval_term(t: Term, binding: dict):
    """Evaluate an arithmetic guard operand to a number, or None if a
    variable is unbound."""
    if isinstance(t, Var):
        v = binding.get(t.name)
        if v is None or not is_number(v):
            return None
        return v
    if is_number(t):
        return t
    if isinstance(t, App) and t.functor in "+-*/" and len(t.args) == 2:
        l = eval_term(t.args[0], binding)
        r = eval_term(t.args[1], binding)
        if l is None or r is None:
            return None
        if t.functor == "+":
            return l + r
        if t.functor == "-":
            return l - r
        if t.functor == "*":
            return l * r
        return Fraction(l, r)
    return None


def eval_builtin(b: Builtin, binding: dict):
    """True/False once decidable; a new binding for ``X = expr`` with X free;
    None if still waiting on variables."""
    l = eval_term(b.lhs, binding)
    r = eval_term(b.rhs, binding)
    if l is None and b.op == "=" and isinstance(b.lhs, Var) and r is not None:
        nb = dict(binding)
        nb[b.lhs.name] = int(r) if Fraction(r).denominator == 1 else r
        return nb
    if r is None and b.op == "=" and isinstance(b.rhs, Var) and l is not None:
        nb = dict(binding)
        nb[b.rhs.name] = int(l) if Fraction(l).denominator == 1 else l
        return nb
    if l is None or r is None:
        return None
    l, r = Fraction(l), Fraction(r)
    return {"=": l == r, "!=": l != r, "<": l < r, "<=": l <= r,
            ">": l > r, ">=": l >= r}[b.op]


def substitute_lit(l: Lit, binding: dict) -> Lit:
    return Lit(substitute(l.atom, binding), l.neg)


# ---------------------------------------------------------------------------
# Body enumeration


class _Index:
    """Possible literals bucketed by signature; insertion-ordered so grounding
    output is identical across processes."""

    def __init__(self):
        self.by_sig: dict = {}

    def add(self, lit: Lit) -> bool:
        sig = (lit.neg, lit.atom.functor, len(lit.atom.args))
        bucket = self.by_sig.setdefault(sig, {})
        if lit in bucket:
            return False
        bucket[lit] = None
        return True

    def candidates(self, lit: Lit):
        # snapshot: callers iterate while new atoms are being added
        return list(self.by_sig.get(
            (lit.neg, lit.atom.functor, len(lit.atom.args)), ()))

    def __contains__(self, lit: Lit) -> bool:
        return lit in self.by_sig.get(
            (lit.neg, lit.atom.functor, len(lit.atom.args)), ())

    def all_lits(self):
        for bucket in self.by_sig.values():
            yield from bucket


def _enumerate_bindings(body, index: _Index, binding: dict, rule: Rule):
    """All bindings satisfying the positive body + builtins over ``index``."""
    pos = [b for b in body if isinstance(b, Lit)]
    builtins = [b for b in body if isinstance(b, Builtin)]

    def rec(i: int, binding: dict, pending: list):
        # evaluate whatever builtins have become decidable
        pending2 = []
        for b in pending:
            res = eval_builtin(b, binding)
            if res is None:
                pending2.append(b)
            elif res is False:
                return
            elif isinstance(res, dict):
                binding = res
            # res is True: guard passed
        if i == len(pos):
            # retry stragglers now that all atoms are matched
            changed = True
            while changed and pending2:
                changed = False
                rest = []
                for b in pending2:
                    res = eval_builtin(b, binding)
                    if res is None:
                        rest.append(b)
                    elif res is False:
                        return
                    elif isinstance(res, dict):
                        binding = res
                        changed = True
                pending2 = rest
            if pending2:
                raise GroundingError(
                    "unresolvable guard %s in rule: %s"
                    % (pending2[0], render_rule(rule)))
            yield binding
            return
        for cand in index.candidates(pos[i]):
            nb = match_term(pos[i].atom, cand.atom, binding)
            if nb is not None:
                yield from rec(i + 1, nb, pending2)

    yield from rec(0, binding, builtins)


def _instantiate_elems(head: Choice, binding: dict, index: _Index, rule: Rule):
    elems = []
    for e in head.elems:
        base = substitute_lit(Lit(e.atom), binding).atom
        if not e.conds:
            elems.append(ChoiceElem(base))
            continue
        for b2 in _enumerate_bindings(list(e.conds), index, dict(binding), rule):
            elems.append(ChoiceElem(substitute(e.atom, b2)))
    seen = set()
    out = []
    for e in elems:
        if e.atom not in seen:
            seen.add(e.atom)
            out.append(e)
    return out


# ---------------------------------------------------------------------------
# Main fixpoint


def ground_program(program: Program) -> GroundProgram:
    index = _Index()
    instances: list[Rule] = []  # ground normal rules and denials, in order
    seen_rules: set = set()
    # choice instances: key -> (orig rule, binding, ground body); elements are
    # (re-)expanded against the growing index and materialised at the end, so
    # an instance created early still sees condition atoms derived later
    choices: dict = {}
    choice_order: list = []

    def ground_body(rule: Rule, binding: dict) -> tuple:
        body = []
        for b in rule.body:
            if isinstance(b, Lit):
                body.append(substitute_lit(b, binding))
            elif isinstance(b, Naf):
                body.append(Naf(substitute_lit(b.lit, binding)))
            # builtins were consumed by the enumeration
        for item in body:
            lit = item.lit if isinstance(item, Naf) else item
            if term_vars(lit.atom):
                raise GroundingError(
                    "unsafe variable in rule: %s" % render_rule(rule))
        return tuple(body)

    changed = True
    guard = 0
    while changed:
        changed = False
        guard += 1
        if guard > 10000:
            raise GroundingError("grounding did not reach a fixpoint")
        for ridx, rule in enumerate(program.rules):
            for binding in _enumerate_bindings(list(rule.body), index, {}, rule):
                body = ground_body(rule, binding)
                if rule.head is None:
                    r = Rule(None, body, rule.comment, rule.info)
                    key = r.key()
                    if key not in seen_rules:
                        seen_rules.add(key)
                        instances.append(r)
                        changed = True
                elif isinstance(rule.head, Lit):
                    head = substitute_lit(rule.head, binding)
                    if term_vars(head.atom):
                        raise GroundingError(
                            "unsafe variable in head of: %s" % render_rule(rule))
                    r = Rule(head, body, rule.comment, rule.info)
                    key = r.key()
                    if key not in seen_rules:
                        seen_rules.add(key)
                        instances.append(r)
                        index.add(head)
                        changed = True
                else:
                    key = (ridx, tuple(sorted((k, repr(v))
                                              for k, v in binding.items())),
                           tuple(_body_key_of(b) for b in body))
                    if key not in choices:
                        choices[key] = (rule, binding, body)
                        choice_order.append(key)
                        changed = True
        # expand choice elements against the current possible set
        for key in choice_order:
            rule, binding, _body = choices[key]
            for e in _instantiate_elems(rule.head, binding, index, rule):
                if index.add(Lit(e.atom)):
                    changed = True

    # materialise choice instances with their final element sets
    for key in choice_order:
        rule, binding, body = choices[key]
        elems = _instantiate_elems(rule.head, binding, index, rule)
        head = Choice(rule.head.lower, rule.head.upper, tuple(elems))
        instances.append(Rule(head, body, rule.comment, rule.info))

    # post-pass: drop trivially-true negations
    final: list[Rule] = []
    final_keys: set = set()
    for r in instances:
        body = []
        for b in r.body:
            if isinstance(b, Naf) and b.lit not in index:
                continue
            body.append(b)
        rr = Rule(r.head, tuple(body), r.comment, r.info)
        k = rr.key()
        if k not in final_keys:
            final_keys.add(k)
            final.append(rr)

    ground = Program(final)
    possible = frozenset(index.all_lits())
    certain = _certain_atoms(final, possible)
    return GroundProgram(ground, possible, certain)


def _body_key_of(b):
    if isinstance(b, Naf):
        return (1, repr(b.lit))
    return (0, repr(b))


def _certain_atoms(rules: list[Rule], possible: frozenset) -> frozenset:
    """Least model of the negation-free normal fragment: holds in every
    answer set."""
    certain: set[Lit] = set()
    changed = True
    while changed:
        changed = False
        for r in rules:
            if not isinstance(r.head, Lit) or r.head in certain:
                continue
            if any(isinstance(b, Naf) for b in r.body):
                continue
            if all(b in certain for b in r.body if isinstance(b, Lit)):
                certain.add(r.head)
                changed = True
    return frozenset(certain)
