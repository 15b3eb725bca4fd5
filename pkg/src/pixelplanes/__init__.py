"""Unified RGB representations for joint video generation and dense prediction."""

__version__ = "0.1.0"
