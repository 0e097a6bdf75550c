"""Numerical toolkit for bound states in the gap of planar Dirac operators with dipole-type potentials."""

__version__ = "0.1.0"
