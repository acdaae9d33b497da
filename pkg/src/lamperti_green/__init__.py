"""Renewal measures (Green functions) of transient vanishing-drift Markov chains."""

__version__ = "0.1.0"
