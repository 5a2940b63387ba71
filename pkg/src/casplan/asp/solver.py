"""Answer-set search over ground programs.

Depth-first search on a three-valued assignment with constraint propagation
(rule satisfaction units, choice-rule cardinality bounds, falsification of
unsupportable atoms, classical-complement exclusion).  Complete assignments
are verified against the exact semantics before being returned, so the
propagator only needs to be sound, not complete.  ``SolverSession.solve_next``
restarts the search, skipping previously returned models and any model whose
occurrence fingerprint is in the caller's block set.
"""

from __future__ import annotations

import random
from typing import Iterator, Optional

from ..casp.lang import Choice, Lit, fingerprint, term_key
from ..casp.answers import is_answer_set
from .grounder import GroundProgram


class BlockSet:
    """Fingerprints of rejected answer sets, shared across solver restarts."""

    def __init__(self):
        self._fps: set = set()

    def add(self, answer_set) -> None:
        self._fps.add(fingerprint(answer_set))

    def add_fingerprint(self, fp: tuple) -> None:
        self._fps.add(fp)

    def __contains__(self, answer_set) -> bool:
        return fingerprint(answer_set) in self._fps

    def __len__(self) -> int:
        return len(self._fps)


class _Conflict(Exception):
    pass


class _Engine:
    def __init__(self, gp: GroundProgram, seed: int = 0):
        self.rules = gp.program.rules
        self.universe = sorted(gp.possible, key=lambda l: (l.neg, term_key(l.atom)))
        self.by_lit_support: dict = {}  # lit -> [rule index, ...]
        for idx, r in enumerate(self.rules):
            if isinstance(r.head, Lit):
                self.by_lit_support.setdefault(r.head, []).append(idx)
            elif isinstance(r.head, Choice):
                for e in r.head.elems:
                    self.by_lit_support.setdefault(Lit(e.atom), []).append(idx)
        self.program = gp.program
        self.branch_order = self._branch_order(seed)

    def _branch_order(self, seed: int) -> list:
        def cls(l: Lit) -> int:
            if l.atom.functor == "occurs":
                return 0
            if l.atom.functor == "is_false":
                return 1
            return 2

        groups: dict[int, list] = {0: [], 1: [], 2: []}
        for l in self.universe:
            groups[cls(l)].append(l)
        rng = random.Random(seed)
        out = []
        for c in (0, 1, 2):
            grp = groups[c]
            if seed:
                rng.shuffle(grp)
            out.extend(grp)
        return out

    # -- propagation ------------------------------------------------------

    def _set(self, assign: dict, lit: Lit, value: bool) -> None:
        cur = assign.get(lit)
        if cur is None:
            assign[lit] = value
            if value:
                comp = lit.complement()
                if assign.get(comp) is True:
                    raise _Conflict
                assign[comp] = False
        elif cur != value:
            raise _Conflict

    def _body_status(self, body, assign: dict):
        """(truth, undecided items): truth True/False/None over the body."""
        undecided = []
        for b in body:
            if isinstance(b, Lit):
                v = assign.get(b)
                if v is False:
                    return False, ()
                if v is None:
                    undecided.append(b)
            else:  # Naf
                v = assign.get(b.lit)
                if v is True:
                    return False, ()
                if v is None:
                    undecided.append(b)
        return (True, ()) if not undecided else (None, tuple(undecided))

    def _propagate(self, assign: dict) -> None:
        changed = True
        while changed:
            changed = False
            before = len(assign)
            for r in self.rules:
                truth, undec = self._body_status(r.body, assign)
                if r.head is None:
                    if truth is True:
                        raise _Conflict
                    if truth is None and len(undec) == 1:
                        b = undec[0]
                        if isinstance(b, Lit):
                            self._set(assign, b, False)
                        else:
                            self._set(assign, b.lit, True)
                elif isinstance(r.head, Lit):
                    hv = assign.get(r.head)
                    if truth is True:
                        if hv is False:
                            raise _Conflict
                        if hv is None:
                            self._set(assign, r.head, True)
                    elif truth is None and hv is False and len(undec) == 1:
                        b = undec[0]
                        if isinstance(b, Lit):
                            self._set(assign, b, False)
                        else:
                            self._set(assign, b.lit, True)
                else:
                    if truth is not True:
                        continue
                    elems = [Lit(e.atom) for e in r.head.elems]
                    ntrue = sum(1 for l in elems if assign.get(l) is True)
                    open_ = [l for l in elems if assign.get(l) is None]
                    upper = r.head.upper
                    if upper is not None and ntrue > upper:
                        raise _Conflict
                    if ntrue + len(open_) < r.head.lower:
                        raise _Conflict
                    if upper is not None and ntrue == upper:
                        for l in open_:
                            self._set(assign, l, False)
                    elif ntrue + len(open_) == r.head.lower:
                        for l in open_:
                            self._set(assign, l, True)
            # falsify atoms no remaining rule can provide
            for l in self.universe:
                if assign.get(l) is not None:
                    continue
                supports = self.by_lit_support.get(l, ())
                alive = False
                for idx in supports:
                    truth, _ = self._body_status(self.rules[idx].body, assign)
                    if truth is not False:
                        alive = True
                        break
                if not alive:
                    self._set(assign, l, False)
            if len(assign) != before:
                changed = True

    # -- search -----------------------------------------------------------

    def models(self, skip) -> Iterator[frozenset]:
        """All answer sets not rejected by ``skip(frozenset) -> bool``."""
        try:
            assign: dict = {}
            self._propagate(assign)
        except _Conflict:
            return

        def rec(assign: dict) -> Iterator[frozenset]:
            pick = None
            for l in self.branch_order:
                if assign.get(l) is None:
                    pick = l
                    break
            if pick is None:
                cand = frozenset(l for l, v in assign.items() if v)
                if not skip(cand) and is_answer_set(self.program, cand):
                    yield cand
                return
            for value in (False, True):
                child = dict(assign)
                try:
                    self._set(child, pick, value)
                    self._propagate(child)
                except _Conflict:
                    continue
                yield from rec(child)

        yield from rec(assign)


class SolverSession:
    """Enumerates answer sets one at a time across repeated calls."""

    def __init__(self, gp: GroundProgram, seed: int = 0):
        self._engine = _Engine(gp, seed)
        self._returned: set = set()

    def solve_next(self, blocked: Optional[BlockSet] = None) -> Optional[frozenset]:
        def skip(cand: frozenset) -> bool:
            if cand in self._returned:
                return True
            if blocked is not None and cand in blocked:
                return True
            return False

        for model in self._engine.models(skip):
            self._returned.add(model)
            return model
        return None


def enumerate_models(gp: GroundProgram, limit: Optional[int] = None,
                     seed: int = 0) -> list[frozenset]:
    engine = _Engine(gp, seed)
    out: list[frozenset] = []
    seen: set = set()
    for m in engine.models(lambda c: c in seen):
        seen.add(m)
        out.append(m)
        if limit is not None and len(out) >= limit:
            break
    return out
