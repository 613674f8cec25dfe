"""Exponentially stable model reference adaptive control."""

__version__ = "0.1.0"
