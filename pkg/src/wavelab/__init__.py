"""Numerical laboratory for dispersive and Strichartz-type estimates of 3D waves
and for small-data cubic quasilinear wave systems."""

__version__ = "0.1.0"
