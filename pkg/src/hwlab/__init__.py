"""Monte Carlo laboratory for Hanson-Wright type concentration inequalities."""

__version__ = "0.1.0"
