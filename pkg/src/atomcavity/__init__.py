"""Simulation and analysis of a defect-free atom array coupled to an optical cavity."""

__version__ = "0.1.0"
