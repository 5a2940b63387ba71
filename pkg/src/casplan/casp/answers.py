"""Answer-set semantics for ground programs.

``is_answer_set`` implements the generate-and-test reading: a consistent set
of literals is an answer set iff it satisfies every rule and equals the least
model of the reduct, where each choice rule additionally contributes the
chosen element atoms as supported (so minimality is modulo choice-provided
atoms).  ``enumerate_answer_sets`` is the brute-force oracle used to check
the search engine on small programs.
"""

from __future__ import annotations

from itertools import combinations
from typing import Iterable

from .lang import Builtin, Choice, Lit, Naf, Program, Rule


def _check_ground(r: Rule) -> None:
    for b in r.body:
        if isinstance(b, Builtin):
            raise ValueError("ground program may not contain builtin guards: %s" % (r,))


def _body_satisfied(body, a_set: frozenset) -> bool:
    for b in body:
        if isinstance(b, Lit):
            if b not in a_set:
                return False
        elif isinstance(b, Naf):
            if b.lit in a_set:
                return False
        else:
            raise ValueError("unevaluated builtin in ground body: %s" % (b,))
    return True


def is_consistent(a_set: Iterable[Lit]) -> bool:
    s = set(a_set)
    return not any(l.complement() in s for l in s)


def reduct(program: Program, a_set: Iterable[Lit]) -> list[Rule]:
    """Gelfond–Lifschitz reduct w.r.t. ``a_set``, with each choice rule
    compiled to definite rules providing its chosen atoms.

    Returns definite rules only (positive bodies, literal heads); denials
    and bound checks are enforced separately by ``is_answer_set``.
    """
    a = frozenset(a_set)
    out: list[Rule] = []
    for r in program.rules:
        _check_ground(r)
        pos, blocked = [], False
        for b in r.body:
            if isinstance(b, Lit):
                pos.append(b)
            elif isinstance(b, Naf):
                if b.lit in a:
                    blocked = True
                    break
        if blocked:
            continue
        if isinstance(r.head, Choice):
            for e in r.head.elems:
                lit = Lit(e.atom)
                if lit in a:
                    out.append(Rule(lit, tuple(pos)))
        elif r.head is not None:
            out.append(Rule(r.head, tuple(pos)))
        # denials contribute nothing to the closure
    return out


def least_model(definite: list[Rule]) -> frozenset:
    """Least model of a definite program (forward chaining to fixpoint)."""
    model: set[Lit] = set()
    pending = True
    while pending:
        pending = False
        for r in definite:
            if r.head in model:
                continue
            if all(b in model for b in r.body):
                model.add(r.head)
                pending = True
    return frozenset(model)


def satisfies(program: Program, a_set: frozenset) -> bool:
    """Classical satisfaction of every rule (no foundedness check)."""
    for r in program.rules:
        _check_ground(r)
        if not _body_satisfied(r.body, a_set):
            continue
        if r.head is None:
            return False
        if isinstance(r.head, Choice):
            n = sum(1 for e in r.head.elems if Lit(e.atom) in a_set)
            if n < r.head.lower or (r.head.upper is not None and n > r.head.upper):
                return False
        elif r.head not in a_set:
            return False
    return True


def is_answer_set(program: Program, a_set: Iterable[Lit]) -> bool:
    a = frozenset(a_set)
    if not is_consistent(a):
        return False
    if not satisfies(program, a):
        return False
    return least_model(reduct(program, a)) == a


def literal_universe(program: Program) -> list[Lit]:
    """All literals that can occur in an answer set of the program."""
    seen: set[Lit] = set()
    for r in program.rules:
        if isinstance(r.head, Lit):
            seen.add(r.head)
        elif isinstance(r.head, Choice):
            for e in r.head.elems:
                seen.add(Lit(e.atom))
    out = sorted(seen, key=repr)
    return out


def enumerate_answer_sets(program: Program, limit: int | None = None) -> list[frozenset]:
    """All answer sets by exhaustive search over head literals.

    Only head-derivable literals can be in an answer set (body-only literals
    are never supported), so the subset lattice over heads is complete.
    Exponential; intended for programs with a dozen or so head literals.
    """
    universe = literal_universe(program)
    found: list[frozenset] = []
    for k in range(len(universe) + 1):
        for combo in combinations(universe, k):
            cand = frozenset(combo)
            if is_answer_set(program, cand):
                found.append(cand)
                if limit is not None and len(found) >= limit:
                    return found
    return found
