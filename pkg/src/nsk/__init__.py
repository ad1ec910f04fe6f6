"""Pseudospectral stationary solver and nonlinear-stability harness for the
compressible Navier-Stokes-Korteweg system on a periodic box."""

__version__ = "0.1.0"
