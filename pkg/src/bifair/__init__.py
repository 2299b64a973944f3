"""Bi-level fair stochastic bandits: group exposure floors plus merit-proportional play within groups."""

__version__ = "0.1.0"
