"""Tabular reinforcement learning over leveled CKKS-style encryption."""

__version__ = "0.1.0"
