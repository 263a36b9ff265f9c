"""Discretised multi-line Kakeya machinery: tubes, tube measures, the maximal
operator as a linear program, Frostman measures and numerical experiments."""

__version__ = "0.1.0"
