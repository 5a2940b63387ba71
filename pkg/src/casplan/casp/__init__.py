"""Constraint answer set programs: language, semantics, and oracles."""
