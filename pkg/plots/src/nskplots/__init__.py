"""Static post-processing plots for solver run directories."""

__version__ = "0.1.0"
