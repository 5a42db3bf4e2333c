"""Bandit-driven neighbor sampling for graph convolutional networks."""

__version__ = "0.1.0"
