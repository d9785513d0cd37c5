"""Steady states and relaxation of sympathetically cooled linear ion chains."""

__version__ = "0.1.0"
