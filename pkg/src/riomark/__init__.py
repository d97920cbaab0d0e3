"""Estimate overreporting of climate-adaptation Rio markers with a Bayesian correction."""

__version__ = "0.1.0"
