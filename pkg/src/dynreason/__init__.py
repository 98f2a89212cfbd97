"""Dynamical scene reasoning: physics, question generation, estimation and program execution."""

__version__ = "0.1.0"
