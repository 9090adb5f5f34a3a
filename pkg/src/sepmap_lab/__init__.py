"""Separatrix maps for a priori unstable Hamiltonian systems of Arnold type."""

__version__ = "0.1.0"
