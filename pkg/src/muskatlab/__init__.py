"""Pseudo-spectral laboratory for the three-dimensional Muskat equation."""
