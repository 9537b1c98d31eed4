"""Team structural diversity and disruptive innovation: metrics, models and synthetic checks."""

__version__ = "0.1.0"
