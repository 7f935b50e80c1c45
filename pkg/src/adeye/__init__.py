"""Deterministic desk-scale co-simulation of a two-channel automated-driving safety concept."""

__version__ = "0.1.0"
