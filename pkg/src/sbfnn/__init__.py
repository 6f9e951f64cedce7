"""Fourier-enhanced physics-informed workbench for systems-biology dynamics."""

__version__ = "0.1.0"
