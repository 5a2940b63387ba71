"""Command-line front end.

Commands: ``plan`` (search + validate + repair, write the plan), ``validate``
(check a plan file against continuous semantics), ``encode`` (dump the
constraint program for an instance), ``ground`` (dump its grounding), and
``bench`` (run a built-in instance end to end and report statistics).

Exit codes: 0 plan found / plan valid; 1 no plan at this horizon / plan
invalid; 2 usage or input error; 3 search gave up (resource limit or
timeout) without an answer either way.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from fractions import Fraction

from .asp.grounder import ground_program
from .benchmarks import (DOMAIN_IDS, BenchmarkError, InstanceSpec,
                         make_task)
from .casp.lang import program_text
from .encoder import EncodingConfig, EncodingError, encode
from .integrator import (IntegrationError, parse_plan_text,
                         plan_with_validation, render_plan_text)
from .pddl.grounding import GroundingError, ground_task
from .pddl.parser import ParseError, parse_domain_text, parse_problem_text
from .validator import ValidationError, validate


class UsageError(Exception):
    pass


# per-domain planning defaults: (last_step, variant, time bound)
_BENCH_DEFAULTS = {
    "generator_linear": (2, "heuristic", 10 ** 4),
    "generator_nonlinear": (3, "basic", 10 ** 4),
    "car_linear": (3, "basic", 100),
    "car_nonlinear": (3, "basic", 100),
    "thermostat": (1, "basic", 100),
}


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as e:
        raise UsageError("not a number: %r (%s)" % (text, e))


def _parse_builtin(text: str) -> InstanceSpec:
    name, _, size_text = text.partition(":")
    size = 1
    if size_text:
        try:
            size = int(size_text)
        except ValueError:
            raise UsageError("bad instance size in %r" % text)
    if name not in DOMAIN_IDS:
        raise UsageError("unknown builtin %r (choose from %s)" %
                         (name, ", ".join(DOMAIN_IDS)))
    try:
        return InstanceSpec(name, size)
    except BenchmarkError as e:
        raise UsageError(str(e))


def _apply_overrides(spec: InstanceSpec, pairs: list) -> InstanceSpec:
    overrides = dict(spec.overrides)
    for pair in pairs or ():
        key, sep, val = pair.partition("=")
        if not sep:
            raise UsageError("override must look like key=value: %r" % pair)
        overrides[key] = _fraction(val)
    return InstanceSpec(spec.domain, spec.size, overrides)


def _load_task(args) -> tuple:
    """(task, description) from --builtin or --domain/--problem."""
    if getattr(args, "builtin", None):
        spec = _apply_overrides(_parse_builtin(args.builtin),
                                getattr(args, "override", ()))
        return make_task(spec), "%s:%d" % (spec.domain, spec.size)
    if not getattr(args, "domain", None) or \
            not getattr(args, "problem", None):
        raise UsageError("provide --builtin NAME:SIZE or both "
                         "--domain and --problem")
    dom_text = _read_file(args.domain)
    prob_text = _read_file(args.problem)
    dom = parse_domain_text(dom_text, args.domain)
    prob = parse_problem_text(prob_text, dom, args.problem)
    return ground_task(dom, prob), os.path.basename(args.problem)


def _read_file(path: str) -> str:
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as e:
        raise UsageError(str(e))


def _encoding_config(args, spec_defaults=None) -> EncodingConfig:
    last_step, variant, bound = spec_defaults or (2, "basic", 10 ** 4)
    if getattr(args, "steps", None) is not None:
        last_step = args.steps
    if getattr(args, "variant", None):
        variant = args.variant
    if getattr(args, "time_bound", None) is not None:
        bound = args.time_bound
    return EncodingConfig(last_step=last_step, variant=variant,
                          time_bounds=(0, bound))


def _bench_defaults(args):
    if getattr(args, "builtin", None):
        name = args.builtin.partition(":")[0]
        return _BENCH_DEFAULTS.get(name)
    return None


def _violation_lines(violations) -> list:
    out = []
    for v in violations:
        lo = float(v.time)
        hi = float(v.end_time if v.end_time is not None else v.time)
        out.append("violation [%.3f, %.3f]: %s" % (lo, hi, v.message))
    return out


def _stats_lines(stats, timings: bool) -> list:
    lines = stats.lines()
    if not timings:
        lines = [ln for ln in lines if not ln.startswith("wall time")]
    return lines


def _write_or_print(text: str, path) -> None:
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# Commands


def _cmd_plan(args) -> int:
    task, name = _load_task(args)
    config = _encoding_config(args, _bench_defaults(args))
    deadline = time.monotonic() + args.timeout if args.timeout else None
    report = plan_with_validation(
        task, config, mode=args.mode, max_horizon=args.max_horizon,
        k=args.k, max_iterations=args.max_iterations,
        eps=_fraction(args.tol), tol=_fraction(args.tol),
        seed=args.seed, deadline=deadline)
    if args.dump_casp and report.program is not None:
        with open(args.dump_casp, "w") as fh:
            fh.write(program_text(report.program))
    print("instance: %s" % name)
    print("outcome: %s" % report.outcome)
    for ln in _stats_lines(report.stats, args.timings):
        print(ln)
    if report.outcome == "plan":
        text = render_plan_text(report.trace)
        if args.out:
            _write_or_print(text, args.out)
            print("plan written to %s" % args.out)
        sys.stdout.write("\n" + text)
        return 0
    for ln in _violation_lines(report.violations):
        print(ln)
    return 1 if report.outcome == "no_plan_at_horizon" else 3


def _cmd_validate(args) -> int:
    task, name = _load_task(args)
    plan = parse_plan_text(_read_file(args.plan), task)
    until = _fraction(args.until) if args.until is not None else None
    report = validate(plan, task, eps=_fraction(args.tol), until=until)
    if report.ok:
        print("Valid plan: %s against %s" % (args.plan, name))
        return 0
    print("Invalid plan: %s against %s" % (args.plan, name))
    for ln in _violation_lines(report.violations):
        print(ln)
    return 1


def _cmd_encode(args, grounded: bool = False) -> int:
    task, _ = _load_task(args)
    config = _encoding_config(args, _bench_defaults(args))
    program = encode(task, config)
    if grounded:
        program = ground_program(program).program
    _write_or_print(program_text(program), args.out)
    return 0


def _cmd_bench(args) -> int:
    if not args.builtin:
        raise UsageError("bench needs --builtin NAME:SIZE")
    t0 = time.monotonic()
    code = _cmd_plan(args)
    print("bench total: %.3f s" % (time.monotonic() - t0)
          if args.timings else "bench done")
    return code


# ---------------------------------------------------------------------------
# Argument wiring


def _add_input_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--domain", help="PDDL+ domain file")
    p.add_argument("--problem", help="PDDL+ problem file")
    p.add_argument("--builtin", metavar="NAME:SIZE",
                   help="built-in instance, e.g. generator_linear:1")
    p.add_argument("--override", action="append", metavar="KEY=VALUE",
                   help="built-in instance parameter (capacity, init, "
                        "goal_time, ...); repeatable")


def _add_encoding_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--steps", type=int,
                   help="index of the last discretization step")
    p.add_argument("--variant", choices=("basic", "heuristic", "estimator"),
                   help="encoding variant")
    p.add_argument("--time-bound", type=int, dest="time_bound",
                   help="upper bound for every time/value variable")


def _add_search_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=("fixed", "cumulative"),
                   default="fixed")
    p.add_argument("--max-horizon", type=int, default=None,
                   help="largest step count tried in cumulative mode")
    p.add_argument("--k", type=int, default=3,
                   help="interior timepoints added per violation")
    p.add_argument("--max-iterations", type=int, default=20,
                   help="validation round limit")
    p.add_argument("--seed", type=int,
                   default=int(os.environ.get("CASPLAN_SEED", "0")),
                   help="search tie-breaking seed (env CASPLAN_SEED)")
    p.add_argument("--timeout", type=float, default=None,
                   help="give up after this many seconds")
    p.add_argument("--dump-casp", metavar="FILE",
                   help="write the final constraint program (expansions "
                        "included) to FILE")
    p.add_argument("--timings", action="store_true",
                   help="include wall-clock lines in the output")


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="casplan",
        description="PDDL+ planning via answer sets with reified numeric "
                    "constraints: discretize, solve lazily, validate "
                    "against continuous semantics, repair by expansion.")
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="search for a validated plan")
    _add_input_flags(p)
    _add_encoding_flags(p)
    _add_search_flags(p)
    p.add_argument("--tol", default=os.environ.get("CASPLAN_TOL", "1/1000"),
                   help="numeric tolerance (env CASPLAN_TOL)")
    p.add_argument("--out", help="plan file to write")

    p = sub.add_parser("validate", help="check a plan file")
    _add_input_flags(p)
    p.add_argument("--plan", required=True, help="plan file to check")
    p.add_argument("--until", default=None,
                   help="goal-check horizon (defaults to the last happening)")
    p.add_argument("--tol", default=os.environ.get("CASPLAN_TOL", "1/1000"),
                   help="numeric tolerance (env CASPLAN_TOL)")

    p = sub.add_parser("encode", help="dump the constraint program")
    _add_input_flags(p)
    _add_encoding_flags(p)
    p.add_argument("--out", help="file to write (default stdout)")

    p = sub.add_parser("ground", help="dump the grounded program")
    _add_input_flags(p)
    _add_encoding_flags(p)
    p.add_argument("--out", help="file to write (default stdout)")

    p = sub.add_parser("bench", help="run a built-in instance end to end")
    _add_input_flags(p)
    _add_encoding_flags(p)
    _add_search_flags(p)
    p.add_argument("--tol", default=os.environ.get("CASPLAN_TOL", "1/1000"),
                   help="numeric tolerance (env CASPLAN_TOL)")
    p.add_argument("--out", help="plan file to write")
    return top


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "plan":
            return _cmd_plan(args)
        if args.command == "validate":
            return _cmd_validate(args)
        if args.command == "encode":
            return _cmd_encode(args)
        if args.command == "ground":
            return _cmd_encode(args, grounded=True)
        if args.command == "bench":
            return _cmd_bench(args)
        raise UsageError("unknown command %r" % args.command)
    except (UsageError, ParseError, GroundingError, BenchmarkError,
            EncodingError, IntegrationError, ValidationError) as e:
        print("error: %s" % e, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
