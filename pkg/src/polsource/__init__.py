"""Simulation and analysis of waveguide SPDC polarization-entangled sources."""

__version__ = "0.1.0"
