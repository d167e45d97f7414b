"""Portfolio variance forecast reconciliation package."""

__version__ = "1.0.0"
