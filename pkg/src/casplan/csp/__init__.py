"""Numeric constraint solving over the reals."""
