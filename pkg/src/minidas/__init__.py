"""Miniature top-down disclosure-avoidance pipeline with Monte Carlo
uncertainty estimation for its tabulated query outputs."""

__version__ = "0.1.0"
