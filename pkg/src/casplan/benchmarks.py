"""Built-in benchmark domains: concrete PDDL+ models with closed-form
reference trajectories.

Four planning families plus a smoke domain:

* ``generator_linear``  — a diesel generator (process, drain rate 1) that
  must run for 1000 time units; N single-use refuel tanks, each a durative
  action adding fuel continuously at rate 2 for 10 units (20 per tank).
  Initial fuel is ``1010 - 20*N`` so every tank is needed and the level
  exactly touches capacity when all pours overlap maximally.
* ``generator_nonlinear`` — same skeleton, but a pour follows a draining
  tank: transferred volume ``iota(t) = 4*t - 0.16*t**2`` over 12.5 units
  (25 per tank), so the instantaneous pour rate starts at 4 and falls
  linearly to 0 as the tank empties.
* ``car_linear``   — a vehicle on a line; velocity changes by +/-1 per
  instantaneous action within [-k, k]; position integrates velocity.
* ``car_nonlinear`` — acceleration changes by +/-1 per action within
  [-k, k]; velocity obeys dv/dt = a - 0.1*v**2 (quadratic drag) and
  position integrates velocity.
* ``thermostat`` — Newton cooling dx/dt = -0.1*x with switch actions;
  exercised by the parser and the simulator, not by the planner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .pddl.grounding import GroundTask, ground_task
from .pddl.parser import parse_domain_text, parse_problem_text

DOMAIN_IDS = ("generator_linear", "generator_nonlinear", "car_linear",
              "car_nonlinear", "thermostat")

#: sizes exercised by the original experiments; larger is extrapolation
TESTED_SIZES = range(1, 9)


class BenchmarkError(Exception):
    pass


@dataclass(frozen=True)
class InstanceSpec:
    domain: str  # one of DOMAIN_IDS
    size: int = 1  # tank count (generator) or accel/velocity bound (car)
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.domain not in DOMAIN_IDS:
            raise BenchmarkError("unknown benchmark domain %r" % self.domain)
        if self.size < 1:
            raise BenchmarkError("instance size must be positive")

    @property
    def extrapolated(self) -> bool:
        return self.size not in TESTED_SIZES

    def option(self, key: str, default):
        return self.overrides.get(key, default)


# ---------------------------------------------------------------------------
# Generator family


_GENERATOR_DOMAIN = """\
(define (domain %(name)s)
  (:requirements :typing :fluents :time :processes :durative-actions)
  (:types tank)
  (:predicates (available ?t - tank))
  (:functions (fuel-level) (capacity) (generator-time))
  (:process generate
    :parameters ()
    :precondition (>= (fuel-level) 0)
    :effect (and (decrease (fuel-level) (* #t 1))
                 (increase (generator-time) (* #t 1))))
  (:durative-action refuel
    :parameters (?t - tank)
    :duration (= ?duration %(duration)s)
    :condition (over all (<= (fuel-level) (capacity)))
    :effect (increase (fuel-level) %(pour)s))
)
"""

_LINEAR_POUR = "(* #t 2)"
_NONLINEAR_POUR = "(- (* 4 #t) (* 0.16 (* #t #t)))"


def _generator_instance(spec: InstanceSpec):
    linear = spec.domain == "generator_linear"
    n = spec.size
    capacity = Fraction(spec.option("capacity", 1000))
    volume = Fraction(20) if linear else Fraction(25)
    default_init = capacity + 10 - volume * n
    init = Fraction(spec.option("init", default_init))
    goal_time = Fraction(spec.option("goal_time", 1000))
    dom = _GENERATOR_DOMAIN % {
        "name": spec.domain.replace("_", "-"),
        "duration": "10" if linear else "12.5",
        "pour": _LINEAR_POUR if linear else _NONLINEAR_POUR,
    }
    tanks = ["tank%d" % i for i in range(1, n + 1)]
    prob = """\
(define (problem %(name)s-%(n)d)
  (:domain %(dname)s)
  (:objects %(objects)s - tank)
  (:init (= (fuel-level) %(init)s)
         (= (capacity) %(capacity)s)
         (= (generator-time) 0)
%(avail)s)
  (:goal (= (generator-time) %(goal)s)))
""" % {"name": spec.domain.replace("_", "-"), "n": n,
       "dname": spec.domain.replace("_", "-"), "objects": " ".join(tanks),
       "init": _num(init), "capacity": _num(capacity),
       "avail": "\n".join("         (available %s)" % t for t in tanks),
       "goal": _num(goal_time)}
    return dom, prob


# ---------------------------------------------------------------------------
# Car family


_CAR_DOMAIN_LINEAR = """\
(define (domain car-linear)
  (:requirements :typing :fluents :time :processes)
  (:predicates (engine-on))
  (:functions (d) (v) (running-time) (top-speed))
  (:process moving
    :parameters ()
    :precondition (engine-on)
    :effect (and (increase (d) (* #t (v)))
                 (increase (running-time) (* #t 1))))
  (:action accelerate
    :parameters ()
    :precondition (and (engine-on) (<= (v) (- (top-speed) 1)))
    :effect (increase (v) 1))
  (:action decelerate
    :parameters ()
    :precondition (and (engine-on) (>= (v) (- 1 (top-speed))))
    :effect (decrease (v) 1))
)
"""

_CAR_DOMAIN_NONLINEAR = """\
(define (domain car-nonlinear)
  (:requirements :typing :fluents :time :processes)
  (:predicates (engine-on))
  (:functions (d) (v) (a) (running-time) (max-accel))
  (:process moving
    :parameters ()
    :precondition (engine-on)
    :effect (and (increase (d) (* #t (v)))
                 (increase (v) (* #t (- (a) (* 0.1 (* (v) (v))))))
                 (increase (running-time) (* #t 1))))
  (:action accelerate
    :parameters ()
    :precondition (and (engine-on) (<= (a) (- (max-accel) 1)))
    :effect (increase (a) 1))
  (:action decelerate
    :parameters ()
    :precondition (and (engine-on) (>= (a) (- 1 (max-accel))))
    :effect (decrease (a) 1))
)
"""


def _car_instance(spec: InstanceSpec):
    linear = spec.domain == "car_linear"
    k = spec.size
    goal_d = Fraction(spec.option("goal_distance", 30))
    # the run-time window makes plan validity schedule-independent: the
    # clock is exact in every code path, and any run at least this long
    # with the pedal down from the start covers the goal distance
    min_rt = Fraction(spec.option("min_running_time", 14))
    max_rt = Fraction(spec.option("max_running_time", 40))
    dom = _CAR_DOMAIN_LINEAR if linear else _CAR_DOMAIN_NONLINEAR
    bound_fn = "top-speed" if linear else "max-accel"
    extra = "" if linear else "\n         (= (a) 0)"
    prob = """\
(define (problem %(name)s-%(k)d)
  (:domain %(name)s)
  (:init (engine-on)
         (= (d) 0)
         (= (v) 0)%(extra)s
         (= (running-time) 0)
         (= (%(bound)s) %(k)d))
  (:goal (and (>= (d) %(goal)s)
              (>= (running-time) %(minrt)s)
              (<= (running-time) %(maxrt)s))))
""" % {"name": "car-linear" if linear else "car-nonlinear", "k": k,
       "bound": bound_fn, "extra": extra, "goal": _num(goal_d),
       "minrt": _num(min_rt), "maxrt": _num(max_rt)}
    return dom, prob


# ---------------------------------------------------------------------------
# Thermostat smoke domain


_THERMOSTAT_DOMAIN = """\
(define (domain thermostat)
  (:requirements :typing :fluents :time :processes)
  (:predicates (is-on) (is-off))
  (:functions (x))
  (:process cooling
    :parameters ()
    :precondition (is-off)
    :effect (decrease (x) (* #t (* 0.1 (x)))))
  (:process heating
    :parameters ()
    :precondition (is-on)
    :effect (increase (x) (* #t (- 5 (* 0.1 (x))))))
  (:action switch-on
    :parameters ()
    :precondition (and (is-off) (<= (x) 19))
    :effect (and (is-on) (not (is-off))))
  (:action switch-off
    :parameters ()
    :precondition (and (is-on) (>= (x) 21))
    :effect (and (is-off) (not (is-on))))
)
"""


def _thermostat_instance(spec: InstanceSpec):
    init_x = Fraction(spec.option("init", 20))
    prob = """\
(define (problem thermostat-1)
  (:domain thermostat)
  (:init (is-off)
         (= (x) %s))
  (:goal (and)))
""" % _num(init_x)
    return _THERMOSTAT_DOMAIN, prob


# ---------------------------------------------------------------------------
# Public construction API


def _num(x: Fraction) -> str:
    x = Fraction(x)
    if x.denominator == 1:
        return str(x.numerator)
    f = float(x)
    if Fraction(repr(f)) == x:
        return repr(f)
    return "(/ %d %d)" % (x.numerator, x.denominator)


def make_instance(spec: InstanceSpec):
    """(domain text, problem text) for a benchmark instance."""
    if spec.domain in ("generator_linear", "generator_nonlinear"):
        return _generator_instance(spec)
    if spec.domain in ("car_linear", "car_nonlinear"):
        return _car_instance(spec)
    return _thermostat_instance(spec)


def make_task(spec: InstanceSpec) -> GroundTask:
    dom_text, prob_text = make_instance(spec)
    dom = parse_domain_text(dom_text, "%s.pddl" % spec.domain)
    prob = parse_problem_text(prob_text, dom, "%s.prob.pddl" % spec.domain)
    return ground_task(dom, prob)


def write_instance(spec: InstanceSpec, directory: str) -> tuple:
    import os
    dom_text, prob_text = make_instance(spec)
    base = "%s_%d" % (spec.domain, spec.size)
    dpath = os.path.join(directory, base + ".pddl")
    ppath = os.path.join(directory, base + ".prob.pddl")
    with open(dpath, "w") as fh:
        fh.write(dom_text)
    with open(ppath, "w") as fh:
        fh.write(prob_text)
    return dpath, ppath


# ---------------------------------------------------------------------------
# Closed-form reference trajectories (independent of the simulator)


@dataclass(frozen=True)
class Trajectory:
    """Named fluent curves; each maps a time to a float value."""

    curves: dict

    def value(self, name: str, t) -> float:
        if name not in self.curves:
            raise BenchmarkError("no reference curve for %r" % name)
        return self.curves[name](float(t))

    def names(self) -> tuple:
        return tuple(sorted(self.curves))


def _pours(plan, duration: float, transferred):
    """Total poured volume at time t, summed over the plan's refuels."""
    starts = [float(s.time) for s in plan.steps if s.name[0] == "refuel"]

    def total(t: float) -> float:
        out = 0.0
        for s in starts:
            out += transferred(min(max(t - s, 0.0), duration))
        return out

    return total


def reference_trajectory(spec: InstanceSpec, plan) -> Trajectory:
    """Closed-form trajectories of the instance under the plan.

    Supported shapes are the ones the planning suites produce: generator
    plans (any refuel schedule), car plans whose pedal actions all happen
    at time 0, and the empty thermostat plan.  Anything else raises.
    """
    if spec.domain in ("generator_linear", "generator_nonlinear"):
        linear = spec.domain == "generator_linear"
        capacity = float(spec.option("capacity", 1000))
        volume = 20.0 if linear else 25.0
        init = float(spec.option(
            "init", Fraction(spec.option("capacity", 1000)) + 10 -
            Fraction(volume) * spec.size))
        if linear:
            poured = _pours(plan, 10.0, lambda u: 2.0 * u)
        else:
            poured = _pours(plan, 12.5, lambda u: 4.0 * u - 0.16 * u * u)
        cap = capacity  # silence linters; capacity appears in curves below

        def fuel(t: float) -> float:
            return init - t + poured(t)

        return Trajectory({"fuel-level": fuel,
                           "generator-time": lambda t: t,
                           "capacity": lambda t: cap})
    if spec.domain == "car_linear":
        bumps = sorted((float(s.time), 1.0 if s.name[0] == "accelerate"
                        else -1.0)
                       for s in plan.steps)

        def v(t: float) -> float:
            return sum(b for (tb, b) in bumps if tb <= t)

        def d(t: float) -> float:
            out = 0.0
            times = [tb for tb, _ in bumps if 0.0 < tb < t]
            cuts = [0.0] + sorted(set(times)) + [t]
            for a, b in zip(cuts, cuts[1:]):
                out += v(a) * (b - a)
            return out

        return Trajectory({"d": d, "v": v, "running-time": lambda t: t})
    if spec.domain == "car_nonlinear":
        net = 0
        for s in plan.steps:
            if float(s.time) != 0.0:
                raise BenchmarkError(
                    "reference curves cover pedal actions at time 0 only")
            net += 1 if s.name[0] == "accelerate" else -1
        if net < 0:
            raise BenchmarkError("reference curves cover forward driving only")
        if net == 0:
            return Trajectory({"d": lambda t: 0.0, "v": lambda t: 0.0,
                               "running-time": lambda t: t})
        # dv/dt = a - 0.1 v^2 from rest: v = sqrt(10 a) tanh(t sqrt(a/10)),
        # d = 10 ln cosh(t sqrt(a/10))
        a = float(net)
        w = math.sqrt(a / 10.0)

        def v(t: float) -> float:
            return math.sqrt(10.0 * a) * math.tanh(w * t)

        def d(t: float) -> float:
            return 10.0 * (math.log(math.cosh(w * t)))

        return Trajectory({"d": d, "v": v, "running-time": lambda t: t})
    # thermostat
    if plan.steps:
        raise BenchmarkError("reference curves cover the empty plan only")
    x0 = float(spec.option("init", 20))
    return Trajectory({"x": lambda t: x0 * math.exp(-0.1 * t)})
