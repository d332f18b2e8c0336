"""Explain real-vs-synthetic detection classifiers to audit synthetic tabular data."""

__version__ = "0.1.0"
