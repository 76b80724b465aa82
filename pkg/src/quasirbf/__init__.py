"""Quasi-interpolation with generalized multiquadric and thin-plate RBFs."""

__version__ = "0.1.0"
