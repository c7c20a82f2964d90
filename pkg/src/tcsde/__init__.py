"""Simulation of time-changed SDEs through their dual SDE.

Backward Euler and projected Euler schemes for super-linearly growing
coefficients, driven by a discretized inverse stable subordinator, plus
tooling to measure strong convergence rates.
"""

__version__ = "0.1.0"
