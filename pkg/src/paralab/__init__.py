"""Numerical laboratory for bi-parameter paraproducts on a sampled torus."""

__version__ = "0.1.0"
