"""Sharp boundary growth for Monge-Ampere equations: barriers, solvers, rate fits."""

__version__ = "0.1.0"
