"""Architecture search driven by a quantile actor-critic agent."""

__version__ = "0.1.0"
