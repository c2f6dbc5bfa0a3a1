"""Numerical laboratory for singular connections, divisors and their limits."""

__version__ = "0.1.0"
