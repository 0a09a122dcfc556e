"""Arbitrary-beta two-matrix model: Bethe roots, spectral curve, free energies and correlators."""

__version__ = "0.1.0"
