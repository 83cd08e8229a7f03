"""Figure rendering for herl CSV artifacts."""

__version__ = "0.1.0"
