"""Effective Hamiltonians of adaptive Trotter evolution on a periodic Ising chain."""

__version__ = "0.1.0"
