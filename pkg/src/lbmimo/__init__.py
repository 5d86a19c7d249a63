"""Lattice-based block-diagonalization precoding for multiuser MIMO broadcast."""

__version__ = "0.1.0"
