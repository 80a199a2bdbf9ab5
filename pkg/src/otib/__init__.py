"""Observation-to-theory induction benchmark, models, and harness."""

__version__ = "0.1.0"
