"""Weighted least-squares Hermite approximation of lognormal elliptic PDEs in 1D."""
__version__ = "0.1.0"
