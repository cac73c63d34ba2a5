"""Simulation and verification tools for the nonlinear Schroedinger equation
driven by a time-homogeneous Poisson random measure."""

__version__ = "0.1.0"
