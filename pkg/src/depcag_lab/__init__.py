"""Numerical laboratory for linear differential equations with piecewise constant argument."""
