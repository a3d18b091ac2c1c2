"""Haar systems, martingale transforms and averaged Ahlfors-Beurling constants."""

__version__ = "0.1.0"
