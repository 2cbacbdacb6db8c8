"""Equity-aware community microgrid scheduling."""

__version__ = "0.1.0"
