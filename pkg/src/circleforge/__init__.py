"""Desk-scale circle-method computations over weighted integer sets."""

__version__ = "0.1.0"
