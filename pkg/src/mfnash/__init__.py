"""Mean-field Nash equilibria for constrained quadratic agent populations."""

__version__ = "0.1.0"
