"""Hyperparameter selection by sample splitting: simulation harness and checks."""

__version__ = "0.1.0"
