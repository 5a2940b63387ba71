"""casplan: PDDL+ planning for hybrid domains via constraint answer set
programming — discretize to a bounded-step program, solve lazily against a
real-valued constraint store, validate candidate plans under continuous-time
semantics, and repair by refining the discretization where the validator
found trouble."""

__version__ = "0.1.0"
