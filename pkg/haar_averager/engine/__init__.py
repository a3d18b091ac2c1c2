"""Numerical engine: Haar systems, transforms, averaged kernels and constants."""
