"""Alpha-derivative tools for coupled delay systems: simulation and oscillation tests."""

__version__ = "0.1.0"
