"""Planning driver: lazy two-stage search plus validate-and-repair.

Stage one enumerates answer sets of the discrete program; stage two solves
the numeric constraint set each answer set induces (constraint payloads of
its required atoms, with aggregate selectors resolved against the answer
set's own selector atoms).  Numerically infeasible answer sets are blocked
by occurrence fingerprint and enumeration continues — the pair ⟨answer set,
numeric witness⟩ is a solution of the combined program.

The outer loop turns solutions into timed plans and judges them under
continuous semantics.  Interval-interior invariant breaches are repaired by
constraint expansion at interpolated timepoints and the enlarged program is
re-solved with the block list intact; any other failure blocks the plan's
occurrence pattern outright.  A plan is returned only after it validates.
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional

from .asp.grounder import ground_program
from .asp.solver import BlockSet, SolverSession
from .casp.lang import (App, Comparison, Lit, Program, SumConstraint, app,
                        gamma, tau_inverse)
from .csp import engine as csp_engine
from .encoder import EncodingConfig, encode, ground_term
from .expander import expand
from .pddl.grounding import GroundTask, render_ground_name
from .validator import Plan, PlanStep, validate


class IntegrationError(Exception):
    pass


@dataclass(frozen=True)
class CaspSolution:
    """An answer set together with a numeric witness for its constraints."""

    answer: frozenset
    assignment: dict  # constraint term -> Fraction
    constraints: tuple


@dataclass
class Stats:
    answer_sets: int = 0
    csps_solved: int = 0
    blocked: int = 0
    iterations: int = 0
    expansions: int = 0
    horizons: tuple = ()
    incomplete_csps: int = 0
    timed_out: bool = False
    wall_time: float = 0.0

    def merge(self, other: "Stats") -> None:
        self.answer_sets += other.answer_sets
        self.csps_solved += other.csps_solved
        self.blocked += other.blocked
        self.iterations += other.iterations
        self.expansions += other.expansions
        self.horizons += other.horizons
        self.incomplete_csps += other.incomplete_csps
        self.timed_out = self.timed_out or other.timed_out

    def as_dict(self) -> dict:
        return {"answer_sets_tried": self.answer_sets,
                "csps_solved": self.csps_solved,
                "answer_sets_blocked": self.blocked,
                "validation_iterations": self.iterations,
                "expansions_applied": self.expansions,
                "horizons_visited": list(self.horizons),
                "csp_resource_exhaustions": self.incomplete_csps,
                "timed_out": self.timed_out,
                "wall_time_s": round(self.wall_time, 3)}

    def lines(self) -> list:
        return ["%s: %s" % (k.replace("_", " "), v)
                for k, v in self.as_dict().items()]


@dataclass
class SolveReport:
    outcome: str  # plan | no_plan_at_horizon | incomplete
    plan: Optional[Plan]
    stats: Stats
    violations: list = field(default_factory=list)
    trace: tuple = ()  # plan steps plus triggered processes/events
    step_times: tuple = ()
    program: Optional[Program] = None  # final program, expansions included


# ---------------------------------------------------------------------------
# Stage coupling: answer set -> numeric constraint set -> witness


def induced_constraints(answer: frozenset) -> list:
    """Constraint payloads of the answer set, aggregates resolved."""
    atoms = [l.atom for l in answer if not l.neg]
    out = []
    for payload in gamma(answer):
        c = tau_inverse(payload)
        if isinstance(c, SumConstraint):
            parts = [a.args[c.pos - 1] for a in atoms
                     if isinstance(a, App) and a.functor == c.rel
                     and a.args and a.args[0] == c.key]
            total: object = Fraction(0)
            for i, p in enumerate(parts):
                total = p if i == 0 else App("+", (total, p))
            out.append(Comparison(c.op, total, c.target))
        else:
            out.append(c)
    return out


def _domain_bounds(answer: frozenset):
    for l in answer:
        if not l.neg and isinstance(l.atom, App) and \
                l.atom.functor == "cspdomain":
            q = l.atom.args[0]
            return (Fraction(q.args[0]), Fraction(q.args[1]))
    return None


def _lex_schedule(last_step: int) -> tuple:
    out = []
    for i in range(last_step + 1):
        out.append(app("tstart", i))
        out.append(app("tend", i))
    return tuple(out)


def program_last_step(program: Program) -> int:
    """Largest interval index declared by the program's step facts."""
    steps = [r.head.atom.args[0] for r in program.rules
             if isinstance(r.head, Lit) and not r.head.neg and not r.body
             and isinstance(r.head.atom, App)
             and r.head.atom.functor == "step"
             and isinstance(r.head.atom.args[0], int)]
    if not steps:
        raise IntegrationError("program declares no steps")
    return max(steps)


def _expired(deadline) -> bool:
    return deadline is not None and time.monotonic() >= deadline


def find_casp_solution(program: Program, session: SolverSession,
                       blocked: BlockSet = None,
                       tol: Fraction = Fraction(1, 1000),
                       stats: Stats = None,
                       deadline=None) -> Optional[CaspSolution]:
    """Next answer set whose induced constraints have a numeric witness.

    Infeasible answer sets are blocked and enumeration continues; the
    witness is lexicographically time-minimal over the interval boundaries.
    A resource-exhausted numeric solve is counted, blocked, and skipped —
    the enumeration is then no longer complete.  ``deadline`` (a
    ``time.monotonic`` value) cuts the enumeration off cooperatively.
    """
    if blocked is None:
        blocked = BlockSet()
    if stats is None:
        stats = Stats()
    lex = _lex_schedule(program_last_step(program))
    while not _expired(deadline):
        answer = session.solve_next(blocked)
        if answer is None:
            return None
        stats.answer_sets += 1
        constraints = induced_constraints(answer)
        res = csp_engine.solve(constraints, lex_order=lex,
                               bounds=_domain_bounds(answer), tol=tol)
        stats.csps_solved += 1
        if res.status == csp_engine.SAT:
            return CaspSolution(answer, res.assignment, tuple(constraints))
        if res.status == csp_engine.EXHAUSTED:
            stats.incomplete_csps += 1
        blocked.add(answer)
        stats.blocked += 1
    stats.timed_out = True
    return None


# ---------------------------------------------------------------------------
# Plan extraction


def _occurrences(answer: frozenset) -> list:
    occ = []
    for l in answer:
        if not l.neg and isinstance(l.atom, App) and \
                l.atom.functor == "occurs":
            what, step = l.atom.args
            occ.append((what, step))
    occ.sort(key=lambda ws: (ws[1], repr(ws[0])))
    return occ


def step_boundaries(solution: CaspSolution, last_step: int) -> tuple:
    a = solution.assignment
    first = Fraction(a.get(app("tstart", 0), Fraction(0)))
    return (first,) + tuple(Fraction(a.get(app("tend", i), Fraction(0)))
                            for i in range(last_step + 1))


def extract_plan(solution: CaspSolution, task: GroundTask,
                 last_step: int):
    """(plan, trace, boundaries) of a solution.

    The plan holds controllable occurrences only; the trace additionally
    carries triggered processes (as timed spans) and events, for plan files
    and trajectory inspection.
    """
    term_of = {}
    for group, kind in ((task.actions, "action"),
                        (task.durative_actions, "durative"),
                        (task.processes, "process"),
                        (task.events, "event")):
        for gn in group:
            term_of[ground_term(gn)] = (kind, gn)

    a = solution.assignment

    def t_of(i) -> Fraction:
        return Fraction(a.get(app("tend", i), Fraction(0)))

    bounds = step_boundaries(solution, last_step)
    horizon = bounds[-1]
    plan_steps = []
    trace = []
    dur_started: dict = {}
    proc_started: dict = {}
    for what, i in _occurrences(solution.answer):
        if isinstance(what, App) and what.functor in ("start", "end", "stop") \
                and len(what.args) == 1 and what.args[0] in term_of:
            kind, gn = term_of[what.args[0]]
            if what.functor == "start" and kind == "durative":
                dur_started.setdefault(gn, []).append(i)
            elif what.functor == "end" and kind == "durative":
                starts = dur_started.get(gn) or []
                if not starts:
                    raise IntegrationError("%s ends at step %s without a "
                                           "start" %
                                           (render_ground_name(gn), i))
                i1 = starts.pop(0)
                plan_steps.append(PlanStep(t_of(i1), gn, t_of(i) - t_of(i1)))
            elif what.functor == "stop" and kind == "process":
                starts = proc_started.get(gn) or []
                if not starts:
                    raise IntegrationError("%s stops at step %s without a "
                                           "trigger" %
                                           (render_ground_name(gn), i))
                i1 = starts.pop(0)
                trace.append(PlanStep(t_of(i1), gn, t_of(i) - t_of(i1)))
            else:
                raise IntegrationError("unexpected occurrence %r" % (what,))
            continue
        if what in term_of:
            kind, gn = term_of[what]
            if kind == "action":
                plan_steps.append(PlanStep(t_of(i), gn, Fraction(0)))
            elif kind == "process":
                proc_started.setdefault(gn, []).append(i)
            elif kind == "event":
                trace.append(PlanStep(t_of(i), gn, Fraction(0)))
            else:
                raise IntegrationError(
                    "durative %s lacks start/end wrapper" %
                    render_ground_name(gn))
            continue
        raise IntegrationError("unrecognized occurrence %r" % (what,))
    for gn, starts in dur_started.items():
        if starts:
            raise IntegrationError("%s starts at step %s without an end" %
                                   (render_ground_name(gn), starts[0]))
    for gn, starts in proc_started.items():
        for i1 in starts:  # still running at the horizon
            trace.append(PlanStep(t_of(i1), gn, horizon - t_of(i1)))
    plan_steps.sort(key=lambda s: (s.time, render_ground_name(s.name)))
    full = sorted(plan_steps + trace,
                  key=lambda s: (s.time, render_ground_name(s.name)))
    return Plan(tuple(plan_steps)), tuple(full), bounds


# ---------------------------------------------------------------------------
# Plan files


def render_plan_text(steps) -> str:
    lines = []
    for s in sorted(steps, key=lambda s: (s.time, render_ground_name(s.name))):
        d = s.duration if s.duration is not None else Fraction(0)
        lines.append("%.3f: %s [%.3f]" % (float(s.time),
                                          render_ground_name(s.name),
                                          float(d)))
    return "\n".join(lines) + ("\n" if lines else "")


_PLAN_LINE = re.compile(
    r"^\s*(?P<t>[0-9.]+)\s*:\s*(?P<name>[A-Za-z0-9_-]+)"
    r"(?:\((?P<args>[^)]*)\))?\s*(?:\[\s*(?P<d>[0-9.]+)\s*\])?\s*$")


def parse_plan_text(text: str, task: GroundTask) -> Plan:
    """Plan steps from the timed-line format; triggered lines are dropped.

    Lines naming processes or events (present in written plan files for the
    full timeline) are skipped — the simulator re-derives them.
    """
    steps = []
    span_end = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split(";")[0].strip()
        if not line or line.startswith(("%", "#")):
            continue
        m = _PLAN_LINE.match(line)
        if not m:
            raise IntegrationError("line %d is not a plan step: %r" %
                                   (lineno, raw))
        args = tuple(s.strip() for s in (m.group("args") or "").split(",")
                     if s.strip())
        gn = (m.group("name"), args)
        t = Fraction(m.group("t"))
        d = Fraction(m.group("d")) if m.group("d") is not None else Fraction(0)
        if span_end is None or t + d > span_end:
            span_end = t + d
        if gn in task.processes or gn in task.events:
            continue
        if gn in task.actions:
            steps.append(PlanStep(t, gn, None))
        elif gn in task.durative_actions:
            steps.append(PlanStep(t, gn, d))
        else:
            raise IntegrationError("line %d names unknown operator %s" %
                                   (lineno, render_ground_name(gn)))
    return Plan(tuple(steps), horizon=span_end)


# ---------------------------------------------------------------------------
# The outer loop


def plan_with_validation(task: GroundTask, config: EncodingConfig,
                         mode: str = "fixed", max_horizon: int = None,
                         k: int = 3, max_iterations: int = 20,
                         eps: Fraction = Fraction(1, 1000),
                         tol: Fraction = Fraction(1, 1000),
                         seed: int = 0, deadline=None) -> SolveReport:
    """Search, validate, and repair until a plan survives simulation.

    ``fixed`` mode works at ``config.last_step``; ``cumulative`` mode rises
    from one interval up to ``max_horizon`` (so the returned plan uses the
    smallest workable horizon).  Numeric invariant breaches trigger
    constraint expansion and a re-solve with blocks intact; other failures
    block the occurrence pattern.  Every returned plan has passed
    validation.  ``deadline`` (``time.monotonic`` value) makes the search
    give up cooperatively with outcome ``incomplete``.
    """
    t0 = time.monotonic()
    if mode == "cumulative":
        if max_horizon is None:
            raise IntegrationError("cumulative mode needs max_horizon")
        total = Stats()
        last = None
        for h in range(1, max_horizon + 1):
            rep = plan_with_validation(task, replace(config, last_step=h),
                                       mode="fixed", k=k,
                                       max_iterations=max_iterations,
                                       eps=eps, tol=tol, seed=seed,
                                       deadline=deadline)
            total.merge(rep.stats)
            total.horizons += (h,)
            last = rep
            if rep.outcome == "plan" or total.timed_out:
                rep.stats = total
                rep.stats.wall_time = time.monotonic() - t0
                return rep
        outcome = "incomplete" if (last and last.outcome == "incomplete") \
            else "no_plan_at_horizon"
        total.wall_time = time.monotonic() - t0
        return SolveReport(outcome, None, total,
                           last.violations if last else [])
    if mode != "fixed":
        raise IntegrationError("unknown mode %r" % (mode,))

    stats = Stats(horizons=(config.last_step,))
    current = encode(task, config)
    blocked = BlockSet()
    session = None
    last_violations: list = []

    def done(outcome, plan=None, trace=(), bounds=()):
        stats.wall_time = time.monotonic() - t0
        return SolveReport(outcome, plan, stats, last_violations, trace,
                           bounds, current)

    while stats.iterations < max_iterations:
        stats.iterations += 1
        if session is None:
            session = SolverSession(ground_program(current), seed=seed)
        sol = find_casp_solution(current, session, blocked, tol, stats,
                                 deadline=deadline)
        if sol is None:
            return done("incomplete" if stats.incomplete_csps
                        or stats.timed_out else "no_plan_at_horizon")
        plan, trace, bounds = extract_plan(sol, task, config.last_step)
        report = validate(plan, task, eps=eps, until=bounds[-1],
                          boundaries=bounds)
        if report.ok:
            return done("plan", plan, trace, bounds)
        last_violations = report.violations
        numeric = [v for v in report.violations
                   if v.kind == "invariant" and v.comparison is not None
                   and v.step is not None]
        if numeric:
            exp = expand(current, numeric, bounds, k=k)
            if exp.rules:
                current = exp.program
                stats.expansions += len(exp.deltas)
                session = None  # re-ground the enlarged program
                continue
        blocked.add(sol.answer)
        stats.blocked += 1
    return done("incomplete")
