"""Stochastic primal-dual forward-backward splitting with ergodic averaging."""

__version__ = "0.1.0"
