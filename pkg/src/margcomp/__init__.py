"""Exact verification workbench for marginal-information compression of two-party protocols."""

__version__ = "0.1.0"
