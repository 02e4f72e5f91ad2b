"""Graph-based money-laundering detection on transaction networks."""

__version__ = "0.1.0"
