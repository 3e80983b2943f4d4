"""Trace-graph fault diagnosis toolkit."""

__version__ = "0.1.0"
